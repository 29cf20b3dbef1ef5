// Equivariant grasp decoding heads.
//
// Feature typing: graspness, occupancy and the classifier score are trivial
// outputs (invariant); a 6D rotation is stored as the first two columns of
// the rotation matrix, each column typed irrep(1) (+) trivial so that under
// a scene rotation the (x,y) pair of every column rotates while z is fixed.
// All heads are stacks of equivariant linear layers with the gated
// nonlinearity, so their contracts hold architecturally for any weights.
#pragma once

#include "c4g/losses.hpp"
#include "c4g/rotation.hpp"
#include "c4g/steerable.hpp"
#include "c4g/triplane.hpp"

namespace c4g {

struct DecoderConfig {
  int eda_offsets = 8;           // K
  int control_points = 6;        // L
  double focal_gamma = 2.0;
  int flow_steps = 20;
  int flow_time_features = 8;    // sinusoidal features of t (trivial-typed)
  int sampling_rounds = 1;
  // Hidden typing: each regular block carries one irrep(1) multiplicity, and
  // the velocity/rotation paths need several in flight at once.
  int hidden_regular = 4;
  int hidden_trivial = 8;
  double eda_offset_scale = 0.02;  // meters per unit of raw offset output
  double control_point_extent = 0.04;  // init box for gripper-frame points

  void validate() const {
    C4G_CHECK_CONFIG(eda_offsets >= 1 && control_points >= 1, "K and L must be positive");
    C4G_CHECK_CONFIG(flow_steps >= 1 && sampling_rounds >= 1, "flow steps/rounds must be positive");
    C4G_CHECK_CONFIG(flow_time_features % 2 == 0, "time features come in sin/cos pairs");
  }
};

inline RepresentationSpec rotation6d_spec(CyclicGroup g) {
  return RepresentationSpec::vector3_columns(g, 2);
}

// Row-wise Gram-Schmidt: [N,6] (two 3D columns) -> [N,9] rotation matrices
// stored column-major (b1, b2, b3). Differentiable; throws a numeric error
// on degenerate inputs.
template <typename T>
Tensor<T> orthonormalize_rot6d(const Tensor<T>& r6) {
  C4G_CHECK_SHAPE(r6.rank() == 2 && r6.shape()[1] == 6, "orthonormalize expects [N,6]");
  auto a = narrow(r6, 1, 0, 3);
  auto b = narrow(r6, 1, 3, 3);
  auto norm_rows = [](const Tensor<T>& v) {
    return sqrt_op(sum_axis(mul(v, v), 1, /*keepdim=*/true));  // [N,1]
  };
  auto na = norm_rows(a);
  for (int64_t i = 0; i < na.numel(); ++i)
    C4G_CHECK(na.data()[i] > T(1e-8), ErrorKind::kNumeric,
              "rot6d orthonormalization: first column near zero at row " << i);
  auto b1 = mul(a, reciprocal(na));
  auto proj = sum_axis(mul(b1, b), 1, true);  // [N,1]
  auto b2raw = sub(b, mul(proj, b1));
  auto nb = norm_rows(b2raw);
  for (int64_t i = 0; i < nb.numel(); ++i)
    C4G_CHECK(nb.data()[i] > T(1e-8), ErrorKind::kNumeric,
              "rot6d orthonormalization: columns near collinear at row " << i);
  auto b2 = mul(b2raw, reciprocal(nb));
  auto b3 = cross3(b1, b2);
  return concat<T>({b1, b2, b3}, 1);  // [N,9] column-major
}

// True when the two stored columns support a stable Gram-Schmidt. Inputs
// with (near-)zero type-1 content arise legitimately: an equivariant encoder
// must produce invariant features wherever the receptive field sees a
// locally symmetric input (e.g. saturated TSDF regions), and invariant
// features cannot carry a rotation. Training masks such rows; inference
// replaces them.
template <typename T>
bool rot6d_well_conditioned(const T* r6, double eps = 1e-4) {
  Eigen::Vector3d a(r6[0], r6[1], r6[2]), b(r6[3], r6[4], r6[5]);
  double na = a.norm();
  if (na < eps) return false;
  Eigen::Vector3d b1 = a / na;
  return (b - b1.dot(b) * b1).norm() >= eps;
}

// Value-level copy with degenerate rows replaced by the identity rotation's
// 6D form; inference-only (no gradient path).
template <typename T>
Tensor<T> sanitize_rot6d_rows(const Tensor<T>& r6) {
  std::vector<T> v(r6.values());
  const int64_t n = r6.shape()[0];
  for (int64_t i = 0; i < n; ++i) {
    if (!rot6d_well_conditioned(v.data() + 6 * i)) {
      const T ident[6] = {T(1), T(0), T(0), T(0), T(1), T(0)};
      std::copy(ident, ident + 6, v.begin() + 6 * i);
    }
  }
  return Tensor<T>::from_values(r6.shape(), std::move(v));
}

// Negative |<q_pred, q_gt>| computed through the trace identity
// |<q1,q2>| = sqrt((1 + tr(R1^T R2)) / 4), which equals the quaternion form
// for all inputs while staying branch-free and handling the double cover.
// `gt_matrices` holds [N,9] rotation matrices in the same column-major
// layout as orthonormalize_rot6d.
template <typename T>
Tensor<T> rotation_loss(const Tensor<T>& pred6, const Tensor<T>& gt_matrices) {
  C4G_CHECK_SHAPE(gt_matrices.rank() == 2 && gt_matrices.shape()[1] == 9,
                  "rotation_loss ground truth must be [N,9]");
  auto pred = orthonormalize_rot6d(pred6);
  auto tr = sum_axis(mul(pred, gt_matrices), 1);  // [N]
  auto q2 = clamp(add_scalar(tr, T(1)), T(1e-12), T(4));
  return neg(mean_all(scale(sqrt_op(q2), T(0.5))));
}

// Stack of equivariant linear layers with gated nonlinearities between.
template <typename T>
class EquivariantMlp {
 public:
  EquivariantMlp() = default;

  EquivariantMlp(const std::string& name, std::vector<RepresentationSpec> specs,
                 ParamRegistry<T>& registry, Rng& rng, bool final_bias = true)
      : specs_(std::move(specs)) {
    C4G_CHECK_CONFIG(specs_.size() >= 2, "mlp needs at least in and out specs");
    for (size_t i = 0; i + 1 < specs_.size(); ++i) {
      bool last = i + 2 == specs_.size();
      layers_.emplace_back(name + ".l" + std::to_string(i), specs_[i], specs_[i + 1],
                           last ? final_bias : true, registry, rng);
    }
  }

  const RepresentationSpec& in_spec() const { return specs_.front(); }
  const RepresentationSpec& out_spec() const { return specs_.back(); }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (i + 1 < layers_.size()) h = gated_nonlinearity(h, specs_[i + 1], 1);
    }
    return h;
  }

 private:
  std::vector<RepresentationSpec> specs_;
  std::vector<EquivariantLinear<T>> layers_;
};

namespace detail {

inline RepresentationSpec hidden_spec(CyclicGroup g, const DecoderConfig& cfg) {
  std::vector<RepBlock> blocks;
  for (int i = 0; i < cfg.hidden_regular; ++i) blocks.push_back(RepBlock::regular());
  for (int i = 0; i < cfg.hidden_trivial; ++i) blocks.push_back(RepBlock::trivial());
  return RepresentationSpec(g, std::move(blocks));
}

}  // namespace detail

// Direct-regression heads: graspness a, occupancy o (invariant sigmoids) and
// the 6D rotation (two typed columns).
template <typename T>
class GigaHeads {
 public:
  GigaHeads() = default;

  GigaHeads(const std::string& name, const RepresentationSpec& c_spec, const DecoderConfig& cfg,
            ParamRegistry<T>& registry, Rng& rng) {
    auto g = c_spec.group();
    auto hid = detail::hidden_spec(g, cfg);
    auto triv1 = RepresentationSpec::trivials(g, 1);
    graspness_ = EquivariantMlp<T>(name + ".a", {c_spec, hid, triv1}, registry, rng);
    occupancy_ = EquivariantMlp<T>(name + ".o", {c_spec, hid, triv1}, registry, rng);
    rotation_ = EquivariantMlp<T>(name + ".rot", {c_spec, hid, rotation6d_spec(g)}, registry, rng,
                                  /*final_bias=*/false);
  }

  Tensor<T> graspness(const Tensor<T>& c) const { return sigmoid(graspness_.forward(c)); }
  Tensor<T> occupancy(const Tensor<T>& c) const { return sigmoid(occupancy_.forward(c)); }
  Tensor<T> rotation6d(const Tensor<T>& c) const { return rotation_.forward(c); }

 private:
  EquivariantMlp<T> graspness_, occupancy_, rotation_;
};

// Equivariant deformable attention: per-point learned 3D offsets (type-1 x,y
// plus trivial z, in world meters), invariant attention weights, residual
// channel mixing.
template <typename T>
class EquivariantDeformableAttention {
 public:
  EquivariantDeformableAttention() = default;

  EquivariantDeformableAttention(const std::string& name, const RepresentationSpec& c_spec,
                                 const DecoderConfig& cfg, ParamRegistry<T>& registry, Rng& rng)
      : k_(cfg.eda_offsets), offset_scale_(static_cast<T>(cfg.eda_offset_scale)) {
    auto g = c_spec.group();
    auto hid = detail::hidden_spec(g, cfg);
    offsets_ = EquivariantLinear<T>(name + ".off", c_spec,
                                    RepresentationSpec::vector3_columns(g, k_), false, registry,
                                    rng);
    attn_ = EquivariantLinear<T>(name + ".attn", c_spec, RepresentationSpec::trivials(g, k_), true,
                                 registry, rng);
    into_ = EquivariantLinear<T>(name + ".in", c_spec, hid, true, registry, rng);
    out_ = EquivariantLinear<T>(name + ".out", hid, c_spec, true, registry, rng);
  }

  int num_offsets() const { return k_; }

  // Offsets in world meters, [N, 3K] laid out (x,y,z) per offset.
  Tensor<T> offsets(const Tensor<T>& c) const {
    return scale(offsets_.forward(c), offset_scale_);
  }

  Tensor<T> attention(const Tensor<T>& c) const { return softmax(attn_.forward(c), 1); }

  // c_tilde(p) = h_out(sum_k A_k h_in(c(p + Delta_k))) + c(p)
  Tensor<T> forward(const TriplaneFeatures<T>& tri, const Tensor<T>& points,
                    const Tensor<T>& c) const {
    auto delta = offsets(c);       // [N, 3K]
    auto attn = attention(c);      // [N, K]
    Tensor<T> acc;
    for (int k = 0; k < k_; ++k) {
      auto pk = add(points, narrow(delta, 1, 3 * k, 3));
      auto ck = query_features(tri, pk);
      auto hk = into_.forward(ck);                       // [N, H]
      auto weighted = mul(hk, narrow(attn, 1, k, 1));    // broadcast [N,1]
      acc = k == 0 ? weighted : add(acc, weighted);
    }
    return add(out_.forward(acc), c);
  }

 private:
  int k_ = 8;
  T offset_scale_ = T(0.02);
  EquivariantLinear<T> offsets_, attn_, into_, out_;
};

// Time-conditioned equivariant velocity field over 6D rotations.
template <typename T>
class RotationFlow {
 public:
  RotationFlow() = default;

  RotationFlow(const std::string& name, const RepresentationSpec& c_spec, const DecoderConfig& cfg,
               ParamRegistry<T>& registry, Rng& rng)
      : time_features_(cfg.flow_time_features), steps_(cfg.flow_steps) {
    auto g = c_spec.group();
    auto rspec = rotation6d_spec(g);
    auto in_spec = rspec.concat(c_spec).concat(RepresentationSpec::trivials(g, time_features_));
    auto hid = detail::hidden_spec(g, cfg);
    net_ = EquivariantMlp<T>(name + ".v", {in_spec, hid, hid, rspec}, registry, rng,
                             /*final_bias=*/false);
  }

  int steps() const { return steps_; }

  // Sinusoidal trivial-typed embedding of t in [0,1]; constant w.r.t. the
  // graph (t is never differentiated).
  Tensor<T> time_embedding(const std::vector<double>& ts) const {
    const int64_t n = static_cast<int64_t>(ts.size());
    const int pairs = time_features_ / 2;
    std::vector<T> v(n * time_features_);
    for (int64_t i = 0; i < n; ++i)
      for (int j = 0; j < pairs; ++j) {
        double f = std::pow(2.0, j) * 2.0 * M_PI;
        v[i * time_features_ + 2 * j] = static_cast<T>(std::sin(f * ts[i]));
        v[i * time_features_ + 2 * j + 1] = static_cast<T>(std::cos(f * ts[i]));
      }
    return Tensor<T>::from_values({n, time_features_}, std::move(v));
  }

  Tensor<T> velocity(const Tensor<T>& r_t, const Tensor<T>& c, const std::vector<double>& ts) const {
    return net_.forward(concat<T>({r_t, c, time_embedding(ts)}, 1));
  }

  // r_t = t r1 + (1-t) r0 and target u(r_t,t) = r1 - r_t, per row of ts.
  static std::pair<Tensor<T>, Tensor<T>> interpolate(const Tensor<T>& r0, const Tensor<T>& r1,
                                                     const std::vector<double>& ts) {
    const int64_t n = r0.shape()[0];
    std::vector<T> tcol(n);
    for (int64_t i = 0; i < n; ++i) tcol[i] = static_cast<T>(ts[i]);
    auto tmat = reshape(Tensor<T>::from_values({n}, tcol), {n, 1});
    auto one_m_t = add_scalar(neg(tmat), T(1));
    auto r_t = add(mul(r1, tmat), mul(r0, one_m_t));
    return {r_t, sub(r1, r_t)};
  }

  // Conditional flow-matching step: squared-error between the predicted
  // velocity and u, averaged over the batch.
  Tensor<T> train_loss(const Tensor<T>& c, const Tensor<T>& r1, Rng& rng) const {
    const int64_t n = c.shape()[0];
    std::vector<double> ts(n);
    std::vector<T> r0v(n * 6);
    for (auto& t : ts) t = rng.uniform();
    for (auto& x : r0v) x = static_cast<T>(rng.normal());
    auto r0 = Tensor<T>::from_values({n, 6}, std::move(r0v));
    auto [r_t, target] = interpolate(r0, r1, ts);
    auto v = velocity(r_t, c, ts);
    auto d = sub(target, v);
    return scale(sum_all(mul(d, d)), T(1) / static_cast<T>(n));
  }

  // Integrates dr/dt = u(r,t)/(1-t) with Euler steps from r0 ~ N(0,1)^6.
  // The learned field regresses u(r_t,t) = r1 - r_t = (1-t)(r1 - r0), whose
  // literal Euler integral stops e^-1 short of the target; dividing by
  // (1-t_k) integrates the true path velocity and the final step lands on
  // the predicted endpoint. Returns [rounds, N, 6] raw (pre-orthonormalized)
  // rotations.
  std::vector<Tensor<T>> sample(const Tensor<T>& c, int rounds, Rng& rng) const {
    NoGradGuard ng;
    const int64_t n = c.shape()[0];
    std::vector<Tensor<T>> out;
    for (int round = 0; round < rounds; ++round) {
      std::vector<T> r0v(n * 6);
      for (auto& x : r0v) x = static_cast<T>(rng.normal());
      auto r = Tensor<T>::from_values({n, 6}, std::move(r0v));
      for (int k = 0; k < steps_; ++k) {
        std::vector<double> ts(n, static_cast<double>(k) / steps_);
        auto v = velocity(r, c, ts);
        r = add(r, scale(v, T(1) / static_cast<T>(steps_ - k)));
        for (int64_t i = 0; i < r.numel(); ++i)
          C4G_CHECK(std::isfinite(static_cast<double>(r.data()[i])), ErrorKind::kNumeric,
                    "flow sampling produced a non-finite state");
      }
      out.push_back(r);
    }
    return out;
  }

 private:
  int time_features_ = 8;
  int steps_ = 20;
  EquivariantMlp<T> net_;
};

// Grasp-conditioned deformable attention over gripper-frame control points,
// followed by the invariant classifier head. Q/K/V share one hidden typing,
// whose representation matrices are orthogonal, so the attention logits are
// exactly invariant.
template <typename T>
class GraspDam {
 public:
  GraspDam() = default;

  GraspDam(const std::string& name, const RepresentationSpec& c_spec, const DecoderConfig& cfg,
           ParamRegistry<T>& registry, Rng& rng)
      : l_(cfg.control_points) {
    auto g = c_spec.group();
    auto hid = detail::hidden_spec(g, cfg);
    hidden_dim_ = hid.dim();
    std::vector<T> init(l_ * 3);
    for (auto& v : init) v = static_cast<T>(rng.uniform(-cfg.control_point_extent,
                                                        cfg.control_point_extent));
    control_points_ = registry.create(name + ".u", {l_, 3}, std::move(init));
    q_ = EquivariantLinear<T>(name + ".q", c_spec, hid, true, registry, rng);
    k_ = EquivariantLinear<T>(name + ".k", c_spec, hid, true, registry, rng);
    v_ = EquivariantLinear<T>(name + ".v", c_spec, hid, true, registry, rng);
    out_ = EquivariantLinear<T>(name + ".out", hid, c_spec, true, registry, rng);
    score_ = EquivariantMlp<T>(name + ".score",
                               {c_spec, hid, RepresentationSpec::trivials(g, 1)}, registry, rng);
  }

  int num_control_points() const { return l_; }
  Tensor<T> control_points() const { return control_points_; }

  // World positions of the transformed control points for grasp poses
  // (p [N,3], rotation matrices [N,9] column-major): T_g u_l = R u_l + p.
  Tensor<T> transformed_point(const Tensor<T>& positions, const Tensor<T>& rot9, int l) const {
    auto u = narrow(control_points_, 0, l, 1);  // [1,3]
    auto ux = narrow(u, 1, 0, 1), uy = narrow(u, 1, 1, 1), uz = narrow(u, 1, 2, 1);
    auto col0 = narrow(rot9, 1, 0, 3);
    auto col1 = narrow(rot9, 1, 3, 3);
    auto col2 = narrow(rot9, 1, 6, 3);
    return add(add(add(mul(col0, ux), mul(col1, uy)), mul(col2, uz)), positions);
  }

  // c_bar(p, r) = h_out(V softmax(K^T Q / sqrt(d))) + c(p)
  Tensor<T> refine(const TriplaneFeatures<T>& tri, const Tensor<T>& positions,
                   const Tensor<T>& rot9, const Tensor<T>& c) const {
    auto q = q_.forward(c);  // [N,H]
    std::vector<Tensor<T>> logits;
    std::vector<Tensor<T>> values;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hidden_dim_)));
    for (int l = 0; l < l_; ++l) {
      auto w = transformed_point(positions, rot9, l);
      auto cw = query_features(tri, w);
      auto kl = k_.forward(cw);
      auto vl = v_.forward(cw);
      logits.push_back(scale(sum_axis(mul(kl, q), 1, true), inv_sqrt));  // [N,1]
      values.push_back(vl);
    }
    auto attn = softmax(concat(logits, 1), 1);  // [N,L]
    Tensor<T> agg;
    for (int l = 0; l < l_; ++l) {
      auto weighted = mul(values[l], narrow(attn, 1, l, 1));
      agg = l == 0 ? weighted : add(agg, weighted);
    }
    return add(out_.forward(agg), c);
  }

  Tensor<T> classify(const Tensor<T>& c_bar) const { return sigmoid(score_.forward(c_bar)); }

 private:
  int l_ = 6;
  int64_t hidden_dim_ = 0;
  Tensor<T> control_points_;
  EquivariantLinear<T> q_, k_, v_, out_;
  EquivariantMlp<T> score_;
};

}  // namespace c4g
