// Scalar training losses.
//
// Probability inputs to the log-based losses are clamped to
// [kProbEps, 1-kProbEps] before the log.
#pragma once

#include "c4g/tensor_ops.hpp"

namespace c4g {

inline constexpr double kProbEps = 1e-7;

namespace detail {
// Clamping maps every finite input into [eps, 1-eps]; only non-finite
// probabilities survive it, and those poison the log terms.
template <typename T>
void check_probabilities(const Tensor<T>& prob) {
  for (int64_t i = 0; i < prob.numel(); ++i)
    C4G_CHECK(std::isfinite(static_cast<double>(prob.data()[i])), ErrorKind::kNumeric,
              "probability outside [0,1] after clamping (non-finite input at index " << i << ")");
}
}  // namespace detail

// Binary cross-entropy; `prob` are probabilities in [0,1], `target` 0/1.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& prob, const Tensor<T>& target) {
  C4G_CHECK_SHAPE(prob.shape() == target.shape(), "bce shape mismatch");
  detail::check_probabilities(prob);
  auto p = clamp(prob, T(kProbEps), T(1.0 - kProbEps));
  auto one = Tensor<T>::full(prob.shape(), T(1));
  auto term = add(mul(target, log_op(p)), mul(sub(one, target), log_op(sub(one, p))));
  return neg(mean_all(term));
}

// Focal loss with focus parameter gamma; reduces to binary cross-entropy at
// gamma = 0. Targets are binary.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& prob, const Tensor<T>& target, T gamma) {
  C4G_CHECK_SHAPE(prob.shape() == target.shape(), "focal shape mismatch");
  detail::check_probabilities(prob);
  for (int64_t i = 0; i < target.numel(); ++i) {
    T t = target.data()[i];
    C4G_CHECK(t == T(0) || t == T(1), ErrorKind::kData, "focal targets must be binary");
  }
  auto p = clamp(prob, T(kProbEps), T(1.0 - kProbEps));
  auto one = Tensor<T>::full(prob.shape(), T(1));
  auto one_m_p = sub(one, p);
  // positives: -(1-p)^gamma log p ; negatives: -p^gamma log(1-p)
  auto pow_g = [gamma](const Tensor<T>& x) {
    if (gamma == T(0)) return Tensor<T>::full(x.shape(), T(1));
    return exp_op(scale(log_op(x), gamma));
  };
  auto pos = mul(pow_g(one_m_p), log_op(p));
  auto negt = mul(pow_g(p), log_op(one_m_p));
  auto term = add(mul(target, pos), mul(sub(one, target), negt));
  return neg(mean_all(term));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  C4G_CHECK_SHAPE(pred.shape() == target.shape(), "mse shape mismatch");
  auto d = sub(pred, target);
  return mean_all(mul(d, d));
}

// -<a,b>/(|a||b|) for flat vectors.
template <typename T>
Tensor<T> negative_cosine(const Tensor<T>& a, const Tensor<T>& b) {
  C4G_CHECK_SHAPE(a.shape() == b.shape(), "negative_cosine shape mismatch");
  auto dot = sum_all(mul(a, b));
  auto na = sqrt_op(sum_all(mul(a, a)));
  auto nb = sqrt_op(sum_all(mul(b, b)));
  return neg(mul(dot, reciprocal(mul(na, nb))));
}

}  // namespace c4g
