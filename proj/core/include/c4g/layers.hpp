// Unconstrained convolution layers for the side branch and the conventional
// encoder variant, plus the x-reflection-symmetrized convolution used by the
// strict (reflection-invariant) side branch.
#pragma once

#include "c4g/conv_ops.hpp"
#include "c4g/deformable.hpp"
#include "c4g/rng.hpp"
#include "c4g/tensor_ops.hpp"

namespace c4g {

namespace detail {

template <typename T>
std::vector<T> he_uniform(int64_t count, int64_t fan_in, Rng& rng) {
  double a = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return v;
}

}  // namespace detail

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;

  Conv2dLayer(const std::string& name, int64_t cin, int64_t cout, int size,
              ParamRegistry<T>& registry, Rng& rng, bool zero_init = false)
      : size_(size) {
    auto init = zero_init ? std::vector<T>(cout * cin * size * size, T(0))
                          : detail::he_uniform<T>(cout * cin * size * size, cin * size * size, rng);
    kernel_ = registry.create(name + ".w", {cout, cin, size, size}, std::move(init));
    bias_ = registry.create(name + ".b", {cout}, std::vector<T>(cout, T(0)));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto y = conv2d(x, kernel_, 1, (size_ - 1) / 2);
    return add(y, reshape(bias_, {bias_.numel(), 1, 1}));
  }

  Tensor<T> kernel() const { return kernel_; }

 private:
  int size_ = 3;
  Tensor<T> kernel_;
  Tensor<T> bias_;
};

template <typename T>
class Conv3dLayer {
 public:
  Conv3dLayer() = default;

  Conv3dLayer(const std::string& name, int64_t cin, int64_t cout, int size,
              ParamRegistry<T>& registry, Rng& rng)
      : size_(size) {
    kernel_ = registry.create(
        name + ".w", {cout, cin, size, size, size},
        detail::he_uniform<T>(cout * cin * size * size * size, cin * size * size * size, rng));
    bias_ = registry.create(name + ".b", {cout}, std::vector<T>(cout, T(0)));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto y = conv3d(x, kernel_, 1, (size_ - 1) / 2);
    return add(y, reshape(bias_, {bias_.numel(), 1, 1, 1}));
  }

 private:
  int size_ = 3;
  Tensor<T> kernel_;
  Tensor<T> bias_;
};

// Conventional deformable convolution layer: a plain convolution predicts
// per-position tap displacements (zero-initialized so training starts from
// the plain convolution), then samples bilinearly.
template <typename T>
class DeformableConv2dLayer {
 public:
  DeformableConv2dLayer() = default;

  DeformableConv2dLayer(const std::string& name, int64_t cin, int64_t cout, int size,
                        ParamRegistry<T>& registry, Rng& rng)
      : size_(size),
        offset_pred_(name + ".off", cin, 2 * size * size, size, registry, rng, /*zero_init=*/true) {
    kernel_ = registry.create(name + ".w", {cout, cin, size, size},
                              detail::he_uniform<T>(cout * cin * size * size, cin * size * size, rng));
    bias_ = registry.create(name + ".b", {cout}, std::vector<T>(cout, T(0)));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto offsets = offset_pred_.forward(x);
    auto y = deformable_conv2d(x, kernel_, offsets);
    return add(y, reshape(bias_, {bias_.numel(), 1, 1}));
  }

 private:
  int size_ = 3;
  Conv2dLayer<T> offset_pred_;
  Tensor<T> kernel_;
  Tensor<T> bias_;
};

}  // namespace c4g
