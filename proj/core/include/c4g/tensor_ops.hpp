// Pointwise, reduction, shape and linear-algebra ops on Tensor<T>.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "c4g/tensor.hpp"

namespace c4g {

namespace detail {

// numpy-style trailing broadcast: shapes are right-aligned, each dim must
// match or be 1.
struct BcastPlan {
  Shape out;
  std::vector<int64_t> stride_a, stride_b;
};

inline BcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  const size_t rank = std::max(a.size(), b.size());
  BcastPlan plan;
  plan.out.resize(rank);
  std::vector<int64_t> da(rank, 1), db(rank, 1);
  for (size_t i = 0; i < a.size(); ++i) da[rank - a.size() + i] = a[i];
  for (size_t i = 0; i < b.size(); ++i) db[rank - b.size() + i] = b[i];
  for (size_t i = 0; i < rank; ++i) {
    C4G_CHECK_SHAPE(da[i] == db[i] || da[i] == 1 || db[i] == 1,
                    "broadcast mismatch " << shape_str(a) << " vs " << shape_str(b));
    plan.out[i] = std::max(da[i], db[i]);
  }
  auto strides_of = [&](const std::vector<int64_t>& dims) {
    std::vector<int64_t> s(rank, 0);
    int64_t acc = 1;
    for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
      s[i] = (dims[i] == 1) ? 0 : acc;
      acc *= dims[i];
    }
    return s;
  };
  plan.stride_a = strides_of(da);
  plan.stride_b = strides_of(db);
  return plan;
}

// Odometer walk over the broadcast output; f(out_idx, a_idx, b_idx).
template <typename F>
void for_each_broadcast(const BcastPlan& plan, F&& f) {
  const size_t rank = plan.out.size();
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(rank, 0);
  int64_t total = shape_numel(plan.out);
  int64_t ia = 0, ib = 0;
  for (int64_t lin = 0; lin < total; ++lin) {
    f(lin, ia, ib);
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      idx[d]++;
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (idx[d] < plan.out[d]) break;
      ia -= plan.stride_a[d] * plan.out[d];
      ib -= plan.stride_b[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

template <typename T, typename FFwd, typename FPartials>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, FFwd fwd, FPartials partials) {
  auto plan = detail::broadcast_plan(a.shape(), b.shape());
  std::vector<T> out(shape_numel(plan.out));
  const T* pa = a.data();
  const T* pb = b.data();
  detail::for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
    out[o] = fwd(pa[ia], pb[ib]);
  });
  return Tensor<T>::make_op(plan.out, std::move(out), {a, b},
                            [plan, partials](typename Tensor<T>::Node& n) {
                              auto& na = *n.parents[0];
                              auto& nb = *n.parents[1];
                              const bool ga = na.requires_grad, gb = nb.requires_grad;
                              if (ga) na.ensure_grad();
                              if (gb) nb.ensure_grad();
                              detail::for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
                                auto [da, db] = partials(na.value[ia], nb.value[ib], n.grad[o]);
                                if (ga) na.grad[ia] += da;
                                if (gb) nb.grad[ib] += db;
                              });
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>(g, g); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>(g, -g); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>(g * y, g * x); });
}

template <typename T, typename FFwd, typename FGrad>
Tensor<T> unary_op(const Tensor<T>& a, FFwd fwd, FGrad dfdx_times_g) {
  std::vector<T> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = fwd(a.data()[i]);
  return Tensor<T>::make_op(a.shape(), std::move(out), {a},
                            [dfdx_times_g](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (size_t i = 0; i < p.value.size(); ++i)
                                p.grad[i] += dfdx_times_g(p.value[i], n.grad[i]);
                            });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return -x; }, [](T, T g) { return -g; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return unary_op<T>(a, [c](T x) { return c * x; }, [c](T, T g) { return c * g; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return unary_op<T>(a, [c](T x) { return x + c; }, [](T, T g) { return g; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return x > T(0) ? x : T(0); },
                     [](T x, T g) { return x > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_op<T>(a,
                     [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                     [](T x, T g) {
                       T s = T(1) / (T(1) + std::exp(-x));
                       return g * s * (T(1) - s);
                     });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::tanh(x); },
                     [](T x, T g) {
                       T t = std::tanh(x);
                       return g * (T(1) - t * t);
                     });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  auto f = [](T x) -> T {
    if (x > T(20)) return x;
    if (x < T(-20)) return std::exp(x);
    return std::log(T(1) + std::exp(x));
  };
  return unary_op<T>(a, f, [](T x, T g) { return g / (T(1) + std::exp(-x)); });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::exp(x); },
                     [](T x, T g) { return g * std::exp(x); });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::log(x); }, [](T x, T g) { return g / x; });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::sqrt(x); },
                     [](T x, T g) { return g / (T(2) * std::sqrt(x)); });
}

template <typename T>
Tensor<T> sin_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::sin(x); },
                     [](T x, T g) { return g * std::cos(x); });
}

template <typename T>
Tensor<T> cos_op(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return std::cos(x); },
                     [](T x, T g) { return -g * std::sin(x); });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& a) {
  return unary_op<T>(a, [](T x) { return T(1) / x; },
                     [](T x, T g) { return -g / (x * x); });
}

// Gradient is passed through strictly inside (lo, hi) and zeroed at the
// clamped ends; used by the probability clamps in the losses.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return unary_op<T>(a,
                     [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
                     [lo, hi](T x, T g) { return (x > lo && x < hi) ? g : T(0); });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  return Tensor<T>::make_op({}, {acc}, {a}, [](typename Tensor<T>::Node& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

namespace detail {
inline void split_axis(const Shape& s, int axis, int64_t& outer, int64_t& mid, int64_t& inner) {
  outer = 1;
  inner = 1;
  mid = s[axis];
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis, bool keepdim = false) {
  C4G_CHECK(axis >= 0 && axis < a.rank(), ErrorKind::kAxis,
            "axis " << axis << " out of range for rank " << a.rank());
  int64_t outer, mid, inner;
  detail::split_axis(a.shape(), axis, outer, mid, inner);
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(a.shape()[i]);
    }
  }
  std::vector<T> out(outer * inner, T(0));
  const T* src = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < mid; ++m)
      for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += src[(o * mid + m) * inner + i];
  return Tensor<T>::make_op(out_shape, std::move(out), {a},
                            [outer, mid, inner](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t o = 0; o < outer; ++o)
                                for (int64_t m = 0; m < mid; ++m)
                                  for (int64_t i = 0; i < inner; ++i)
                                    p.grad[(o * mid + m) * inner + i] += n.grad[o * inner + i];
                            });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis, bool keepdim = false) {
  return scale(sum_axis(a, axis, keepdim), T(1) / static_cast<T>(a.shape()[axis]));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  C4G_CHECK_SHAPE(shape_numel(shape) == a.numel(),
                  "reshape " << shape_str(a.shape()) << " -> " << shape_str(shape));
  std::vector<T> out(a.values());
  return Tensor<T>::make_op(std::move(shape), std::move(out), {a},
                            [](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& perm) {
  C4G_CHECK(static_cast<int>(perm.size()) == a.rank(), ErrorKind::kAxis, "permute rank mismatch");
  const int rank = a.rank();
  Shape out_shape(rank);
  for (int i = 0; i < rank; ++i) out_shape[i] = a.shape()[perm[i]];
  std::vector<int64_t> in_strides(rank, 1), out_strides(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape()[i + 1];
  for (int i = rank - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
  // map[out_lin] = in_lin
  std::vector<int64_t> map(a.numel());
  std::vector<int64_t> idx(rank, 0);
  for (int64_t lin = 0; lin < a.numel(); ++lin) {
    int64_t in_lin = 0;
    for (int i = 0; i < rank; ++i) in_lin += idx[i] * in_strides[perm[i]];
    map[lin] = in_lin;
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<T> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.data()[map[i]];
  return Tensor<T>::make_op(out_shape, std::move(out), {a},
                            [map](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (size_t i = 0; i < map.size(); ++i) p.grad[map[i]] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  C4G_CHECK(!parts.empty(), ErrorKind::kShape, "concat of zero tensors");
  const int rank = parts[0].rank();
  C4G_CHECK(axis >= 0 && axis < rank, ErrorKind::kAxis, "concat axis out of range");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    C4G_CHECK_SHAPE(p.rank() == rank, "concat rank mismatch");
    for (int i = 0; i < rank; ++i)
      C4G_CHECK_SHAPE(i == axis || p.shape()[i] == out_shape[i], "concat shape mismatch");
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;
  int64_t outer, mid, inner;
  detail::split_axis(out_shape, axis, outer, mid, inner);
  (void)mid;
  std::vector<T> out(shape_numel(out_shape));
  std::vector<int64_t> part_mid(parts.size());
  for (size_t k = 0; k < parts.size(); ++k) part_mid[k] = parts[k].shape()[axis];
  int64_t off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t m = 0; m < part_mid[k]; ++m)
        for (int64_t i = 0; i < inner; ++i)
          out[(o * axis_total + off + m) * inner + i] = src[(o * part_mid[k] + m) * inner + i];
    off += part_mid[k];
  }
  return Tensor<T>::make_op(out_shape, std::move(out), parts,
                            [outer, inner, axis_total, part_mid](typename Tensor<T>::Node& n) {
                              int64_t off2 = 0;
                              for (size_t k = 0; k < n.parents.size(); ++k) {
                                auto& p = *n.parents[k];
                                if (!p.requires_grad) {
                                  off2 += part_mid[k];
                                  continue;
                                }
                                p.ensure_grad();
                                for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t m = 0; m < part_mid[k]; ++m)
                                    for (int64_t i = 0; i < inner; ++i)
                                      p.grad[(o * part_mid[k] + m) * inner + i] +=
                                          n.grad[(o * axis_total + off2 + m) * inner + i];
                                off2 += part_mid[k];
                              }
                            });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& a, int axis, int64_t start, int64_t len) {
  C4G_CHECK(axis >= 0 && axis < a.rank(), ErrorKind::kAxis, "narrow axis out of range");
  C4G_CHECK_SHAPE(start >= 0 && start + len <= a.shape()[axis], "narrow range out of bounds");
  int64_t outer, mid, inner;
  detail::split_axis(a.shape(), axis, outer, mid, inner);
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const T* src = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < len; ++m)
      for (int64_t i = 0; i < inner; ++i)
        out[(o * len + m) * inner + i] = src[(o * mid + start + m) * inner + i];
  return Tensor<T>::make_op(out_shape, std::move(out), {a},
                            [outer, mid, inner, start, len](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t o = 0; o < outer; ++o)
                                for (int64_t m = 0; m < len; ++m)
                                  for (int64_t i = 0; i < inner; ++i)
                                    p.grad[(o * mid + start + m) * inner + i] +=
                                        n.grad[(o * len + m) * inner + i];
                            });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  C4G_CHECK_SHAPE(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
                  "matmul shapes " << shape_str(a.shape()) << " x " << shape_str(b.shape()));
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n);
  Eigen::Map<const Mat> ma(a.data(), m, k), mb(b.data(), k, n);
  Eigen::Map<Mat>(out.data(), m, n) = ma * mb;
  return Tensor<T>::make_op({m, n}, std::move(out), {a, b},
                            [m, k, n](typename Tensor<T>::Node& node) {
                              auto& pa = *node.parents[0];
                              auto& pb = *node.parents[1];
                              Eigen::Map<const Mat> va(pa.value.data(), m, k);
                              Eigen::Map<const Mat> vb(pb.value.data(), k, n);
                              Eigen::Map<const Mat> go(node.grad.data(), m, n);
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                Eigen::Map<Mat>(pa.grad.data(), m, k).noalias() += go * vb.transpose();
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                Eigen::Map<Mat>(pb.grad.data(), k, n).noalias() += va.transpose() * go;
                              }
                            });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  C4G_CHECK_SHAPE(a.rank() == 2, "transpose2d needs rank 2");
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  C4G_CHECK(axis >= 0 && axis < a.rank(), ErrorKind::kAxis, "softmax axis out of range");
  int64_t outer, mid, inner;
  detail::split_axis(a.shape(), axis, outer, mid, inner);
  std::vector<T> out(a.numel());
  const T* src = a.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T mx = src[(o * mid) * inner + i];
      for (int64_t m = 1; m < mid; ++m) mx = std::max(mx, src[(o * mid + m) * inner + i]);
      T z = T(0);
      for (int64_t m = 0; m < mid; ++m) {
        T e = std::exp(src[(o * mid + m) * inner + i] - mx);
        out[(o * mid + m) * inner + i] = e;
        z += e;
      }
      for (int64_t m = 0; m < mid; ++m) out[(o * mid + m) * inner + i] /= z;
    }
  std::vector<T> saved = out;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a},
                            [outer, mid, inner, saved](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t o = 0; o < outer; ++o)
                                for (int64_t i = 0; i < inner; ++i) {
                                  T dot = T(0);
                                  for (int64_t m = 0; m < mid; ++m) {
                                    int64_t ix = (o * mid + m) * inner + i;
                                    dot += n.grad[ix] * saved[ix];
                                  }
                                  for (int64_t m = 0; m < mid; ++m) {
                                    int64_t ix = (o * mid + m) * inner + i;
                                    p.grad[ix] += saved[ix] * (n.grad[ix] - dot);
                                  }
                                }
                            });
}

// Row-wise cross product on [N,3] tensors.
template <typename T>
Tensor<T> cross3(const Tensor<T>& a, const Tensor<T>& b) {
  C4G_CHECK_SHAPE(a.rank() == 2 && a.shape()[1] == 3 && a.shape() == b.shape(),
                  "cross3 expects matching [N,3] tensors");
  const int64_t n = a.shape()[0];
  std::vector<T> out(n * 3);
  const T* pa = a.data();
  const T* pb = b.data();
  for (int64_t r = 0; r < n; ++r) {
    const T *x = pa + 3 * r, *y = pb + 3 * r;
    out[3 * r + 0] = x[1] * y[2] - x[2] * y[1];
    out[3 * r + 1] = x[2] * y[0] - x[0] * y[2];
    out[3 * r + 2] = x[0] * y[1] - x[1] * y[0];
  }
  return Tensor<T>::make_op({n, 3}, std::move(out), {a, b},
                            [n](typename Tensor<T>::Node& node) {
                              auto& pa2 = *node.parents[0];
                              auto& pb2 = *node.parents[1];
                              const bool ga = pa2.requires_grad, gb = pb2.requires_grad;
                              if (ga) pa2.ensure_grad();
                              if (gb) pb2.ensure_grad();
                              // d<a x b, g>/da = b x g ; d/db = g x a
                              for (int64_t r = 0; r < n; ++r) {
                                const T* x = pa2.value.data() + 3 * r;
                                const T* y = pb2.value.data() + 3 * r;
                                const T* g = node.grad.data() + 3 * r;
                                if (ga) {
                                  pa2.grad[3 * r + 0] += y[1] * g[2] - y[2] * g[1];
                                  pa2.grad[3 * r + 1] += y[2] * g[0] - y[0] * g[2];
                                  pa2.grad[3 * r + 2] += y[0] * g[1] - y[1] * g[0];
                                }
                                if (gb) {
                                  pb2.grad[3 * r + 0] += g[1] * x[2] - g[2] * x[1];
                                  pb2.grad[3 * r + 1] += g[2] * x[0] - g[0] * x[2];
                                  pb2.grad[3 * r + 2] += g[0] * x[1] - g[1] * x[0];
                                }
                              }
                            });
}

}  // namespace c4g
