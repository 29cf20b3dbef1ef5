// Steerable kernels and equivariant layers.
//
// A kernel w is steerable for (rho_in, rho_out) when
//     w(g.p) = rho_out(g) w(p) rho_in(g)^-1   for all g,
// with g acting on kernel offsets by the exact 90-degree index rotation
// about the kernel center. Bases are built by group averaging: every
// canonical kernel is projected onto the constraint's fixed subspace with
//     P(E)(p) = (1/|G|) sum_g rho_out(g)^T E(g.p) rho_in(g),
// then the projected set is orthonormalized by SVD and near-zero directions
// are dropped (singular values below 1e-8). The constraint decomposes per
// (in-block, out-block) pair, so bases are built and cached per pair and a
// layer kernel is assembled from per-pair blocks.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>

#include "c4g/conv_ops.hpp"
#include "c4g/field.hpp"
#include "c4g/group.hpp"
#include "c4g/rng.hpp"
#include "c4g/tensor_ops.hpp"

namespace c4g {

inline constexpr double kBasisSvdThreshold = 1e-8;

// Two kernel constraint families share the basis machinery:
//   kRotation    - w(g.p) = rho_out(g) w(p) rho_in(g)^-1 with g rotating the
//                  kernel offsets (the steerable convolution of the XY branch
//                  and the lift).
//   kChannelFlip - w(p) rho_in(g) = rho_out(g) w(p) for all g (the group acts
//                  on channels only), plus w(dz,dx) = w(dz,-dx). This is the
//                  constraint of the reflection-invariant side branch, where
//                  scene rotations permute lifted channels and flip the
//                  x-axis of the side planes without rotating them.
enum class KernelFamily { kRotation, kChannelFlip };

namespace detail {

struct PairKey {
  int family;
  int order;
  int kind_in, freq_in;
  int kind_out, freq_out;
  int size;
  bool operator<(const PairKey& o) const {
    return std::tie(family, order, kind_in, freq_in, kind_out, freq_out, size) <
           std::tie(o.family, o.order, o.kind_in, o.freq_in, o.kind_out, o.freq_out, o.size);
  }
};

// Rows are orthonormal basis elements, flattened row-major [o][i][ki][kj].
inline Eigen::MatrixXd build_pair_basis(const CyclicGroup& group, const RepBlock& in_b,
                                        const RepBlock& out_b, int size) {
  C4G_CHECK_CONFIG(size >= 1 && size % 2 == 1, "kernel size must be odd, got " << size);
  // Spatial 90-degree index rotations are exact only for C4; a size-1 kernel
  // has no spatial extent, so plain intertwiners work for any order.
  C4G_CHECK_CONFIG(group.order == 4 || size == 1,
                   "grid kernel bases with spatial extent are defined for C4");
  const int di = in_b.dim(group);
  const int dout = out_b.dim(group);
  const int positions = size * size;
  const int dim = dout * di * positions;

  std::vector<Eigen::MatrixXd> rho_in(group.order), rho_out(group.order);
  for (int k = 0; k < group.order; ++k) {
    GroupElement g(group, k);
    rho_in[k] = block_matrix(in_b, g);
    rho_out[k] = block_matrix(out_b, g);
  }

  Eigen::MatrixXd candidates(dim, dim);
  int row = 0;
  for (int o0 = 0; o0 < dout; ++o0)
    for (int i0 = 0; i0 < di; ++i0)
      for (int q = 0; q < positions; ++q, ++row) {
        Eigen::VectorXd proj = Eigen::VectorXd::Zero(dim);
        const int64_t qi = q / size, qj = q % size;
        for (int k = 0; k < group.order; ++k) {
          // position p with g.p == q0, i.e. p = g^-1.q0
          auto [pi, pj] = rotate_index_90(qi, qj, size, -k);
          Eigen::MatrixXd contrib =
              rho_out[k].transpose() *
              (Eigen::VectorXd::Unit(dout, o0) * Eigen::RowVectorXd::Unit(di, i0)) * rho_in[k];
          contrib /= static_cast<double>(group.order);
          for (int o = 0; o < dout; ++o)
            for (int i = 0; i < di; ++i)
              proj[(o * di + i) * positions + pi * size + pj] += contrib(o, i);
        }
        candidates.row(row) = proj;
      }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(candidates, Eigen::ComputeThinV);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > kBasisSvdThreshold) ++rank;
  Eigen::MatrixXd basis(rank, dim);
  for (int i = 0; i < rank; ++i) basis.row(i) = svd.matrixV().col(i);
  return basis;
}

// Basis for the channel-typed, x-flip-symmetric side kernels: group
// averaging over C4 acting on channels and Z2 flipping the last kernel axis.
inline Eigen::MatrixXd build_side_pair_basis(const CyclicGroup& group, const RepBlock& in_b,
                                             const RepBlock& out_b, int size) {
  C4G_CHECK_CONFIG(size >= 1 && size % 2 == 1, "kernel size must be odd, got " << size);
  const int di = in_b.dim(group);
  const int dout = out_b.dim(group);
  const int positions = size * size;
  const int dim = dout * di * positions;

  std::vector<Eigen::MatrixXd> rho_in(group.order), rho_out(group.order);
  for (int k = 0; k < group.order; ++k) {
    GroupElement g(group, k);
    rho_in[k] = block_matrix(in_b, g);
    rho_out[k] = block_matrix(out_b, g);
  }

  Eigen::MatrixXd candidates(dim, dim);
  int row = 0;
  for (int o0 = 0; o0 < dout; ++o0)
    for (int i0 = 0; i0 < di; ++i0)
      for (int q = 0; q < positions; ++q, ++row) {
        Eigen::VectorXd proj = Eigen::VectorXd::Zero(dim);
        const int qi = q / size, qj = q % size;
        for (int k = 0; k < group.order; ++k) {
          Eigen::MatrixXd contrib =
              rho_out[k].transpose() *
              (Eigen::VectorXd::Unit(dout, o0) * Eigen::RowVectorXd::Unit(di, i0)) * rho_in[k];
          contrib /= static_cast<double>(2 * group.order);
          for (int flip = 0; flip < 2; ++flip) {
            int pj = flip ? size - 1 - qj : qj;
            for (int o = 0; o < dout; ++o)
              for (int i = 0; i < di; ++i)
                proj[(o * di + i) * positions + qi * size + pj] += contrib(o, i);
          }
        }
        candidates.row(row) = proj;
      }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(candidates, Eigen::ComputeThinV);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > kBasisSvdThreshold) ++rank;
  Eigen::MatrixXd basis(rank, dim);
  for (int i = 0; i < rank; ++i) basis.row(i) = svd.matrixV().col(i);
  return basis;
}

inline const Eigen::MatrixXd& cached_pair_basis(const CyclicGroup& group, const RepBlock& in_b,
                                                const RepBlock& out_b, int size,
                                                KernelFamily family = KernelFamily::kRotation) {
  static std::map<PairKey, Eigen::MatrixXd> cache;
  static std::mutex mu;
  PairKey key{static_cast<int>(family),
              group.order,
              static_cast<int>(in_b.kind),
              in_b.frequency,
              static_cast<int>(out_b.kind),
              out_b.frequency,
              size};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) {
    Eigen::MatrixXd basis = family == KernelFamily::kRotation
                                ? build_pair_basis(group, in_b, out_b, size)
                                : build_side_pair_basis(group, in_b, out_b, size);
    it = cache.emplace(key, std::move(basis)).first;
  }
  return it->second;
}

template <typename T>
Tensor<T> basis_as_tensor(const Eigen::MatrixXd& basis) {
  std::vector<T> v(basis.size());
  for (int r = 0; r < basis.rows(); ++r)
    for (int c = 0; c < basis.cols(); ++c) v[r * basis.cols() + c] = static_cast<T>(basis(r, c));
  return Tensor<T>::from_values({basis.rows(), basis.cols()}, std::move(v));
}

}  // namespace detail

// Constraint-satisfying convolution kernel: per-pair basis matrices plus one
// flat coefficient parameter. materialize() is differentiable w.r.t. the
// coefficients.
template <typename T>
class SteerableKernel {
 public:
  SteerableKernel() = default;

  SteerableKernel(const std::string& name, RepresentationSpec in_spec, RepresentationSpec out_spec,
                  int size, ParamRegistry<T>& registry, Rng& rng,
                  KernelFamily family = KernelFamily::kRotation)
      : in_(std::move(in_spec)), out_(std::move(out_spec)), size_(size) {
    const auto& group = in_.group();
    C4G_CHECK(group == out_.group(), ErrorKind::kGroupMismatch, "kernel specs over different groups");
    int offset = 0;
    for (size_t ob = 0; ob < out_.blocks().size(); ++ob)
      for (size_t ib = 0; ib < in_.blocks().size(); ++ib) {
        const auto& basis =
            detail::cached_pair_basis(group, in_.blocks()[ib], out_.blocks()[ob], size, family);
        PairSlot slot;
        slot.ob = static_cast<int>(ob);
        slot.ib = static_cast<int>(ib);
        slot.nbasis = static_cast<int>(basis.rows());
        slot.offset = offset;
        slot.basis = detail::basis_as_tensor<T>(basis);
        offset += slot.nbasis;
        pairs_.push_back(std::move(slot));
      }
    num_coeffs_ = offset;
    const T bound = init_bound();
    std::vector<T> init(num_coeffs_);
    for (auto& v : init) v = static_cast<T>(rng.uniform(-bound, bound));
    coeffs_ = registry.create(name, {num_coeffs_}, std::move(init));
  }

  int num_coefficients() const { return num_coeffs_; }
  int size() const { return size_; }
  const RepresentationSpec& in_spec() const { return in_; }
  const RepresentationSpec& out_spec() const { return out_; }
  Tensor<T> coefficients() const { return coeffs_; }

  // Test hook: perturbs one basis entry so the materialized kernel violates
  // the steerability constraint. Used by the audit's negative control only.
  void corrupt_basis_for_test(double epsilon) {
    for (auto& slot : pairs_) {
      if (slot.nbasis > 0) {
        slot.basis.mutable_data()[0] += static_cast<T>(epsilon);
        return;
      }
    }
  }

  // Assembled kernel [dim_out, dim_in, k, k].
  Tensor<T> materialize() const {
    const auto& group = in_.group();
    const int64_t k = size_;
    std::vector<Tensor<T>> out_rows;
    size_t pair_idx = 0;
    for (size_t ob = 0; ob < out_.blocks().size(); ++ob) {
      const int64_t dob = out_.blocks()[ob].dim(group);
      std::vector<Tensor<T>> in_cols;
      for (size_t ib = 0; ib < in_.blocks().size(); ++ib, ++pair_idx) {
        const auto& slot = pairs_[pair_idx];
        const int64_t dib = in_.blocks()[ib].dim(group);
        Tensor<T> block;
        if (slot.nbasis == 0) {
          block = Tensor<T>::zeros({dob, dib, k, k});
        } else {
          auto c = reshape(narrow(coeffs_, 0, slot.offset, slot.nbasis), {1, slot.nbasis});
          block = reshape(matmul(c, slot.basis), {dob, dib, k, k});
        }
        in_cols.push_back(block);
      }
      out_rows.push_back(in_cols.size() == 1 ? in_cols[0] : concat(in_cols, 1));
    }
    return out_rows.size() == 1 ? out_rows[0] : concat(out_rows, 0);
  }

 private:
  T init_bound() const {
    // Coefficients are uniform in [-a, a]; a is scaled so the materialized
    // kernel's expected Frobenius norm matches 1/fan_in variance per entry.
    if (num_coeffs_ == 0) return T(0);
    double dout = out_.dim();
    return static_cast<T>(std::sqrt(3.0 * dout / static_cast<double>(num_coeffs_)));
  }

  struct PairSlot {
    int ob = 0, ib = 0;
    int nbasis = 0;
    int offset = 0;
    Tensor<T> basis;  // [nbasis, do*di*k*k], constant
  };

  RepresentationSpec in_, out_;
  int size_ = 1;
  int num_coeffs_ = 0;
  std::vector<PairSlot> pairs_;
  Tensor<T> coeffs_;
};

namespace detail {

// Bias is representable only on trivial blocks and uniformly across regular
// blocks; returns the 0/1 expansion matrix [dim, n_bias] (empty if none).
inline Eigen::MatrixXd bias_expansion(const RepresentationSpec& spec) {
  int nb = 0;
  for (const auto& b : spec.blocks())
    if (b.kind == BlockKind::kTrivial || b.kind == BlockKind::kRegular) ++nb;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(spec.dim(), nb);
  int col = 0, off = 0;
  for (const auto& b : spec.blocks()) {
    const int d = b.dim(spec.group());
    if (b.kind == BlockKind::kTrivial || b.kind == BlockKind::kRegular) {
      for (int i = 0; i < d; ++i) m(off + i, col) = 1.0;
      ++col;
    }
    off += d;
  }
  return m;
}

}  // namespace detail

// Same-padding stride-1 steerable convolution layer.
template <typename T>
class SteerableConv2d {
 public:
  SteerableConv2d() = default;

  SteerableConv2d(const std::string& name, RepresentationSpec in_spec, RepresentationSpec out_spec,
                  int size, bool with_bias, ParamRegistry<T>& registry, Rng& rng,
                  KernelFamily family = KernelFamily::kRotation)
      : kernel_(name + ".w", in_spec, out_spec, size, registry, rng, family) {
    if (with_bias) {
      Eigen::MatrixXd expand = detail::bias_expansion(kernel_.out_spec());
      if (expand.cols() > 0) {
        bias_expand_ = detail::basis_as_tensor<T>(expand);
        bias_ = registry.create(name + ".b", {expand.cols()},
                                std::vector<T>(expand.cols(), T(0)));
      }
    }
  }

  const RepresentationSpec& in_spec() const { return kernel_.in_spec(); }
  const RepresentationSpec& out_spec() const { return kernel_.out_spec(); }
  const SteerableKernel<T>& kernel() const { return kernel_; }
  SteerableKernel<T>& mutable_kernel() { return kernel_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    C4G_CHECK_SHAPE(x.shape()[0] == in_spec().dim(),
                    "steerable conv input channels " << x.shape()[0] << " != spec dim "
                                                     << in_spec().dim());
    auto out = conv2d(x, kernel_.materialize(), 1, (kernel_.size() - 1) / 2);
    return add_bias(out);
  }

  FeatureField2d<T> forward(const FeatureField2d<T>& f) const {
    C4G_CHECK(f.spec == in_spec(), ErrorKind::kType,
              "field spec " << f.spec.describe() << " != layer in spec " << in_spec().describe());
    return {forward(f.data), out_spec()};
  }

  // Bias as a [C,1,1] channel map, or an undefined tensor when absent.
  Tensor<T> bias_channel_vector() const {
    if (!bias_.defined()) return {};
    auto vec = matmul(bias_expand_, reshape(bias_, {bias_.numel(), 1}));
    return reshape(vec, {out_spec().dim(), 1, 1});
  }

 private:
  Tensor<T> add_bias(const Tensor<T>& x) const {
    if (!bias_.defined()) return x;
    return add(x, bias_channel_vector());
  }

  SteerableKernel<T> kernel_;
  Tensor<T> bias_;         // [n_bias] or undefined
  Tensor<T> bias_expand_;  // [dim_out, n_bias]
};

// Equivariant linear map on row batches [N, dim_in]; a size-1 steerable
// kernel.
template <typename T>
class EquivariantLinear {
 public:
  EquivariantLinear() = default;

  EquivariantLinear(const std::string& name, RepresentationSpec in_spec,
                    RepresentationSpec out_spec, bool with_bias, ParamRegistry<T>& registry,
                    Rng& rng)
      : kernel_(name + ".w", in_spec, out_spec, 1, registry, rng) {
    if (with_bias) {
      Eigen::MatrixXd expand = detail::bias_expansion(kernel_.out_spec());
      if (expand.cols() > 0) {
        bias_expand_ = detail::basis_as_tensor<T>(expand);
        bias_ = registry.create(name + ".b", {expand.cols()},
                                std::vector<T>(expand.cols(), T(0)));
      }
    }
  }

  const RepresentationSpec& in_spec() const { return kernel_.in_spec(); }
  const RepresentationSpec& out_spec() const { return kernel_.out_spec(); }
  const SteerableKernel<T>& kernel() const { return kernel_; }

  Tensor<T> weight_matrix() const {
    auto k = kernel_.materialize();  // [do, di, 1, 1]
    return reshape(k, {k.shape()[0], k.shape()[1]});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    C4G_CHECK_SHAPE(x.rank() == 2 && x.shape()[1] == in_spec().dim(),
                    "equivariant linear input must be [N," << in_spec().dim() << "]");
    auto out = matmul(x, transpose2d(weight_matrix()));
    if (bias_.defined()) {
      auto vec = matmul(bias_expand_, reshape(bias_, {bias_.numel(), 1}));
      out = add(out, reshape(vec, {out_spec().dim()}));
    }
    return out;
  }

 private:
  SteerableKernel<T> kernel_;
  Tensor<T> bias_;
  Tensor<T> bias_expand_;
};

// Single 3D steerable layer lifting a scalar volume into regular features.
// The group acts on the (y,x) kernel axes with z fixed, so the constraint
// decouples per z-slice and the 3D basis is one 2D basis per slice.
template <typename T>
class LiftingConv3d {
 public:
  LiftingConv3d() = default;

  LiftingConv3d(const std::string& name, int regular_blocks, int size, ParamRegistry<T>& registry,
                Rng& rng, CyclicGroup group = CyclicGroup(4))
      : size_(size), out_spec_(RepresentationSpec::regulars(group, regular_blocks)) {
    C4G_CHECK_CONFIG(size >= 1 && size % 2 == 1, "lifting kernel size must be odd");
    in_spec_ = RepresentationSpec::trivials(group, 1);
    slices_.reserve(size);
    for (int z = 0; z < size; ++z)
      slices_.emplace_back(name + ".z" + std::to_string(z), in_spec_, out_spec_, size, registry,
                           rng);
    Eigen::MatrixXd expand = detail::bias_expansion(out_spec_);
    bias_expand_ = detail::basis_as_tensor<T>(expand);
    bias_ = registry.create(name + ".b", {expand.cols()}, std::vector<T>(expand.cols(), T(0)));
  }

  const RepresentationSpec& out_spec() const { return out_spec_; }
  int size() const { return size_; }

  Tensor<T> materialize() const {
    std::vector<Tensor<T>> parts;
    for (const auto& s : slices_) {
      auto k2 = s.materialize();  // [do, 1, k, k]
      parts.push_back(reshape(k2, {k2.shape()[0], k2.shape()[1], 1, k2.shape()[2], k2.shape()[3]}));
    }
    return concat(parts, 2);  // [do, 1, k, k, k]
  }

  // tsdf [1,S,S,S] -> [d*|G|, S,S,S]
  FeatureField3d<T> forward(const Tensor<T>& tsdf) const {
    C4G_CHECK_SHAPE(tsdf.rank() == 4 && tsdf.shape()[0] == 1, "lifting input must be [1,S,S,S]");
    C4G_CHECK(tsdf.shape()[1] == tsdf.shape()[2] && tsdf.shape()[2] == tsdf.shape()[3],
              ErrorKind::kGeometry, "lifting input must be cubic");
    auto out = conv3d(tsdf, materialize(), 1, (size_ - 1) / 2);
    auto vec = matmul(bias_expand_, reshape(bias_, {bias_.numel(), 1}));
    out = add(out, reshape(vec, {out_spec_.dim(), 1, 1, 1}));
    return {out, out_spec_};
  }

 private:
  int size_ = 3;
  RepresentationSpec in_spec_, out_spec_;
  std::vector<SteerableKernel<T>> slices_;
  Tensor<T> bias_;
  Tensor<T> bias_expand_;
};

// Pointwise nonlinearity that preserves the typing: ReLU on trivial and
// regular blocks (permutation representations commute with pointwise maps),
// norm-gated scaling on irrep pairs.
template <typename T>
Tensor<T> gated_nonlinearity(const Tensor<T>& x, const RepresentationSpec& spec, int channel_axis) {
  C4G_CHECK_SHAPE(x.shape()[channel_axis] == spec.dim(), "nonlinearity channel/spec mismatch");
  std::vector<Tensor<T>> parts;
  int off = 0;
  size_t b = 0;
  const auto& blocks = spec.blocks();
  while (b < blocks.size()) {
    if (blocks[b].kind == BlockKind::kIrrep && blocks[b].frequency >= 1) {
      auto v = narrow(x, channel_axis, off, 2);
      auto a0 = narrow(x, channel_axis, off, 1);
      auto a1 = narrow(x, channel_axis, off + 1, 1);
      auto norm = sqrt_op(add_scalar(add(mul(a0, a0), mul(a1, a1)), T(1e-12)));
      parts.push_back(mul(v, sigmoid(norm)));
      off += 2;
      ++b;
    } else {
      // merge the run of pointwise-safe blocks into one slice
      int len = 0;
      while (b < blocks.size() &&
             !(blocks[b].kind == BlockKind::kIrrep && blocks[b].frequency >= 1)) {
        len += blocks[b].dim(spec.group());
        ++b;
      }
      parts.push_back(relu(narrow(x, channel_axis, off, len)));
      off += len;
    }
  }
  return parts.size() == 1 ? parts[0] : concat(parts, channel_axis);
}

}  // namespace c4g
