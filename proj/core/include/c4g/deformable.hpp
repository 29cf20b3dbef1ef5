// Deformable convolution (side branch) and deformable steerable convolution.
//
// The deformable steerable layer samples at
//     p + b(p) + d_k(p) * p_k
// where the global offset b transforms as a type-1 field and the dilations
// d_k are invariant scalars shared within each rotationally symmetric figure
// of the offset set. Both are produced by an auxiliary steerable convolution
// with output type irrep(1) (+) trivial^{num_figures}. Bilinear sampling with
// zero outside matches plain convolution's zero padding, and 90-degree index
// rotations map the 4-neighbour cell structure onto itself, so C4
// equivariance is exact up to float roundoff even for fractional offsets.
#pragma once

#include <array>

#include "c4g/sample_ops.hpp"
#include "c4g/steerable.hpp"

namespace c4g {

// Partition of kernel offsets into rotationally symmetric figures, each
// carrying one dilation parameter. The center offset carries none.
struct FigureTable {
  int kernel_size = 3;
  CyclicGroup group{4};
  std::vector<std::array<double, 2>> offsets;  // (di, dj) in index units
  std::vector<int> param_index;                // per offset; -1 for the center
  int num_params = 0;
};

// C4: offsets are the (2m+1)^2 grid positions and figures are the closures
// of one canonical offset under rotation and axis swap, m(m+3)/2 of them.
// C8: offsets are m rings of 8 points at multiples of 45 degrees (fractional
// off the axes), one figure per ring.
FigureTable figure_assignment(int kernel_size, CyclicGroup group);

// Conventional deformable convolution: y(p) = sum_k w_k x(p + p_k + dp_k(p)).
// `offsets` is [2K, H, W] with per-position (di, dj) displacements in the
// same order as the kernel taps (row-major over the kernel window).
template <typename T>
Tensor<T> deformable_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& offsets) {
  C4G_CHECK_SHAPE(x.rank() == 3 && kernel.rank() == 4, "deformable_conv2d shapes");
  const int64_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int64_t cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  const int64_t k = kh * kw;
  C4G_CHECK_SHAPE(kernel.shape()[1] == cin, "deformable_conv2d channel mismatch");
  C4G_CHECK_SHAPE(offsets.rank() == 3 && offsets.shape()[0] == 2 * k &&
                      offsets.shape()[1] == h && offsets.shape()[2] == w,
                  "offsets must be [2K,H,W] matching the input grid");

  // Base tap positions p + p_k as a constant [K*H*W, 2] tensor, then add the
  // learned displacements and bilinear-sample with zero outside.
  std::vector<T> base(k * h * w * 2);
  const int64_t pad_i = (kh - 1) / 2, pad_j = (kw - 1) / 2;
  int64_t idx = 0;
  for (int64_t t = 0; t < k; ++t) {
    const int64_t ki = t / kw - pad_i, kj = t % kw - pad_j;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        base[idx++] = static_cast<T>(i + ki);
        base[idx++] = static_cast<T>(j + kj);
      }
  }
  auto base_t = Tensor<T>::from_values({k * h * w, 2}, std::move(base));
  // offsets [2K,H,W] -> [K,2,H,W] -> [K,H,W,2] -> [K*H*W,2]
  auto disp = reshape(permute(reshape(offsets, {k, 2, h, w}), {0, 2, 3, 1}), {k * h * w, 2});
  auto pts = add(base_t, disp);
  auto sampled = bilinear_sample(x, pts, BoundaryMode::kZero);  // [K*H*W, Cin]
  // out[co, p] = sum_{t, ci} kernel[co, ci, t] * sampled[t, p, ci]
  auto cols = reshape(permute(reshape(sampled, {k, h * w, cin}), {0, 2, 1}), {k * cin, h * w});
  auto kmat = reshape(permute(reshape(kernel, {cout, cin, k}), {0, 2, 1}), {cout, k * cin});
  return reshape(matmul(kmat, cols), {cout, h, w});
}

// Predictor output typing and positivity mapping for the deformable
// steerable convolution.
template <typename T>
struct OffsetDilation {
  Tensor<T> b;  // [2,H,W] type-1 global offset, bounded by a norm gate
  Tensor<T> d;  // [num_params,H,W] positive dilations (softplus, ~1 at init)
};

// C8 kernel over ring tap positions: within a ring every tap weight is
// determined by the canonical one via w(r^j p0) = rho_out(r^j) W0
// rho_in(r^j)^-1, and the center tap is a plain intertwiner. Tap positions
// are fractional, so the layer using this is only approximately equivariant
// on grids.
template <typename T>
class RingSteerableKernel {
 public:
  RingSteerableKernel() = default;

  RingSteerableKernel(const std::string& name, RepresentationSpec in_spec,
                      RepresentationSpec out_spec, const FigureTable& table,
                      ParamRegistry<T>& registry, Rng& rng)
      : in_(std::move(in_spec)), out_(std::move(out_spec)),
        center_(name + ".c", in_, out_, 1, registry, rng) {
    const int64_t di = in_.dim(), dout = out_.dim();
    const int rings = table.num_params;
    const T bound = static_cast<T>(std::sqrt(3.0 / static_cast<double>(di * 8 * rings + 1)));
    std::vector<T> init(rings * dout * di);
    for (auto& v : init) v = static_cast<T>(rng.uniform(-bound, bound));
    ring_w0_ = registry.create(name + ".rings", {rings, dout, di}, std::move(init));
    for (int j = 0; j < 8; ++j) {
      GroupElement g(in_.group(), j);
      rho_out_.push_back(detail::basis_as_tensor<T>(out_.matrix(g)));
      rho_in_t_.push_back(detail::basis_as_tensor<T>(in_.matrix(g).transpose()));
    }
  }

  // Tap weights in figure-table order as [cout, K*cin] for the sampler GEMM.
  Tensor<T> tap_matrix(const FigureTable& table) const {
    const int64_t di = in_.dim(), dout = out_.dim();
    std::vector<Tensor<T>> taps;  // each [dout, di]
    auto centerk = center_.materialize();
    taps.push_back(reshape(centerk, {dout, di}));
    for (int r = 0; r < table.num_params; ++r) {
      auto w0 = reshape(narrow(ring_w0_, 0, r, 1), {dout, di});
      for (int j = 0; j < 8; ++j) taps.push_back(matmul(matmul(rho_out_[j], w0), rho_in_t_[j]));
    }
    C4G_CHECK_SHAPE(taps.size() == table.offsets.size(), "ring tap count mismatch");
    std::vector<Tensor<T>> rows;
    for (auto& t : taps) rows.push_back(reshape(t, {dout, 1, di}));
    return reshape(concat(rows, 1), {dout, static_cast<int64_t>(taps.size()) * di});
  }

 private:
  RepresentationSpec in_, out_;
  SteerableKernel<T> center_;
  Tensor<T> ring_w0_;
  std::vector<Tensor<T>> rho_out_, rho_in_t_;
};

// Deformable steerable convolution layer (3x3 base kernel by default).
template <typename T>
class DeformableSteerableConv2d {
 public:
  DeformableSteerableConv2d() = default;

  DeformableSteerableConv2d(const std::string& name, RepresentationSpec in_spec,
                            RepresentationSpec out_spec, int size, ParamRegistry<T>& registry,
                            Rng& rng, double max_global_offset = 2.0)
      : table_(figure_assignment(size, in_spec.group())),
        max_b_(static_cast<T>(max_global_offset)),
        in_spec_(in_spec),
        out_spec_(out_spec) {
    const bool c4 = in_spec.group().order == 4;
    if (c4) {
      base_ = SteerableConv2d<T>(name + ".base", in_spec, out_spec, size, true, registry, rng);
    } else {
      ring_ = RingSteerableKernel<T>(name + ".base", in_spec, out_spec, table_, registry, rng);
    }
    // Predictor: in_spec -> irrep(1) (+) trivial^{num_figures}. For C8 only a
    // 1x1 predictor is exactly equivariant pointwise. Zero-initialized so the
    // layer starts as the plain steerable convolution (b = 0, d = 1).
    std::vector<RepBlock> blocks{RepBlock::irrep(1)};
    for (int i = 0; i < table_.num_params; ++i) blocks.push_back(RepBlock::trivial());
    RepresentationSpec pred_spec(in_spec.group(), std::move(blocks));
    predictor_ = SteerableConv2d<T>(name + ".pred", in_spec, pred_spec, c4 ? size : 1, true,
                                    registry, rng);
    auto coeffs = predictor_.kernel().coefficients();
    std::fill_n(coeffs.mutable_data(), coeffs.numel(), T(0));
  }

  const RepresentationSpec& in_spec() const { return in_spec_; }
  const RepresentationSpec& out_spec() const { return out_spec_; }
  const FigureTable& table() const { return table_; }
  const SteerableConv2d<T>& base() const { return base_; }
  bool deform_enabled() const { return deform_enabled_; }
  void set_deform_enabled(bool v) { deform_enabled_ = v; }

  OffsetDilation<T> predict(const Tensor<T>& x) const {
    auto raw = predictor_.forward(x);
    const int64_t h = raw.shape()[1], w = raw.shape()[2];
    auto b_raw = narrow(raw, 0, 0, 2);
    // Norm-gated tanh bound: b = b_raw * max_b * tanh(|b|)/|b|; equivariant
    // for any rotation and smooth at 0.
    auto b0 = narrow(b_raw, 0, 0, 1);
    auto b1 = narrow(b_raw, 0, 1, 1);
    auto norm = sqrt_op(add_scalar(add(mul(b0, b0), mul(b1, b1)), T(1e-12)));
    auto gate = scale(mul(tanh_op(norm), reciprocal(norm)), max_b_);
    auto b = mul(b_raw, gate);
    // softplus bias chosen so dilations start at 1.
    auto s_raw = narrow(raw, 0, 2, table_.num_params);
    auto d = softplus(add_scalar(s_raw, T(0.541324854612918)));
    (void)h;
    (void)w;
    return {b, d};
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (!deform_enabled_ && table_.group.order == 4) return base_.forward(x);
    auto od = predict(x);
    return forward_with(x, od.b, od.d);
  }

  FeatureField2d<T> forward(const FeatureField2d<T>& f) const {
    C4G_CHECK(f.spec == in_spec(), ErrorKind::kType, "field spec mismatch in DSCN");
    return {forward(f.data), out_spec()};
  }

  // Exposed separately so tests can pin b and d. The type-1 offset pair
  // holds (x, y) world components: channel 0 displaces the second (x) array
  // index, channel 1 the first (y) index.
  Tensor<T> forward_with(const Tensor<T>& x, const Tensor<T>& b, const Tensor<T>& d) const {
    const int64_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    C4G_CHECK_SHAPE(cin == in_spec().dim(), "DSCN input channel mismatch");
    const int64_t k = static_cast<int64_t>(table_.offsets.size());
    const int64_t cout = out_spec().dim();

    // Tap positions p + b(p) + d_k(p) p_k, assembled with ops so offsets and
    // dilations receive gradients through the sampler.
    std::vector<Tensor<T>> tap_i, tap_j;
    auto bj = reshape(narrow(b, 0, 0, 1), {h, w});
    auto bi = reshape(narrow(b, 0, 1, 1), {h, w});
    std::vector<T> grid_i(h * w), grid_j(h * w);
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        grid_i[i * w + j] = static_cast<T>(i);
        grid_j[i * w + j] = static_cast<T>(j);
      }
    auto gi = Tensor<T>::from_values({h, w}, grid_i);
    auto gj = Tensor<T>::from_values({h, w}, grid_j);
    auto ci = add(gi, bi);
    auto cj = add(gj, bj);
    for (int64_t t = 0; t < k; ++t) {
      const double oi = table_.offsets[t][0], oj = table_.offsets[t][1];
      const int fig = table_.param_index[t];
      if (fig < 0) {
        tap_i.push_back(ci);
        tap_j.push_back(cj);
      } else {
        auto dk = reshape(narrow(d, 0, fig, 1), {h, w});
        tap_i.push_back(add(ci, scale(dk, static_cast<T>(oi))));
        tap_j.push_back(add(cj, scale(dk, static_cast<T>(oj))));
      }
    }
    auto all_i = reshape(concat(tap_i, 0), {k * h * w, 1});
    auto all_j = reshape(concat(tap_j, 0), {k * h * w, 1});
    auto pts = concat(std::vector<Tensor<T>>{all_i, all_j}, 1);
    auto sampled = bilinear_sample(x, pts, BoundaryMode::kZero);  // [K*H*W, Cin]
    auto cols = reshape(permute(reshape(sampled, {k, h * w, cin}), {0, 2, 1}), {k * cin, h * w});

    auto kmat = tap_kernel_matrix(cout, cin, k);
    auto out = reshape(matmul(kmat, cols), {cout, h, w});
    if (table_.group.order == 4) {
      auto bias = base_.bias_channel_vector();
      if (bias.defined()) out = add(out, bias);
    }
    return out;
  }

 private:
  // Kernel entries w(p_k) in figure-table tap order, as [cout, K*cin].
  Tensor<T> tap_kernel_matrix(int64_t cout, int64_t cin, int64_t k) const {
    if (table_.group.order == 8) return ring_.tap_matrix(table_);
    auto kernel = base_.kernel().materialize();  // [cout, cin, ks, ks]
    const int ks = base_.kernel().size();
    const int pad = (ks - 1) / 2;
    std::vector<int> tap_to_entry(k);
    for (int64_t t = 0; t < k; ++t) {
      int ki = static_cast<int>(std::lround(table_.offsets[t][0])) + pad;
      int kj = static_cast<int>(std::lround(table_.offsets[t][1])) + pad;
      tap_to_entry[t] = ki * ks + kj;
    }
    auto km = reshape(kernel, {cout, cin, static_cast<int64_t>(ks) * ks});
    // gather entries in tap order: [cout, cin, K] -> [cout, K*cin]
    std::vector<Tensor<T>> per_tap;
    for (int64_t t = 0; t < k; ++t)
      per_tap.push_back(narrow(km, 2, tap_to_entry[t], 1));  // [cout, cin, 1]
    auto gathered = concat(per_tap, 2);                      // [cout, cin, K]
    return reshape(permute(gathered, {0, 2, 1}), {cout, k * cin});
  }

  FigureTable table_;
  T max_b_ = T(2);
  RepresentationSpec in_spec_, out_spec_;
  SteerableConv2d<T> base_;
  RingSteerableKernel<T> ring_;
  SteerableConv2d<T> predictor_;
  bool deform_enabled_ = true;
};

}  // namespace c4g
