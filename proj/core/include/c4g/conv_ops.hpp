// Dense 2D/3D cross-correlation, pooling and upsampling.
//
// Layouts: 2D fields are [C,H,W], 3D fields [C,D,H,W], kernels
// [Cout,Cin,kh,kw] / [Cout,Cin,kd,kh,kw]. Convolution is cross-correlation
// (deep-learning convention) with zero padding, lowered to im2col + GEMM.
#pragma once

#include <Eigen/Dense>

#include "c4g/tensor.hpp"

namespace c4g {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void im2col2d(const T* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
              int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* col) {
  for (int64_t c = 0; c < cin; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        T* dst = col + ((c * kh + ki) * kw + kj) * (ho * wo);
        for (int64_t oi = 0; oi < ho; ++oi) {
          int64_t ii = oi * stride - pad + ki;
          for (int64_t oj = 0; oj < wo; ++oj) {
            int64_t jj = oj * stride - pad + kj;
            dst[oi * wo + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                    ? x[(c * h + ii) * w + jj]
                                    : T(0);
          }
        }
      }
}

template <typename T>
void col2im2d(const T* col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
              int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* x) {
  for (int64_t c = 0; c < cin; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        const T* src = col + ((c * kh + ki) * kw + kj) * (ho * wo);
        for (int64_t oi = 0; oi < ho; ++oi) {
          int64_t ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          for (int64_t oj = 0; oj < wo; ++oj) {
            int64_t jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) x[(c * h + ii) * w + jj] += src[oi * wo + oj];
          }
        }
      }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, int64_t stride = 1, int64_t pad = 0) {
  C4G_CHECK_SHAPE(x.rank() == 3, "conv2d input must be [C,H,W], got " << shape_str(x.shape()));
  C4G_CHECK_SHAPE(kernel.rank() == 4, "conv2d kernel must be [Cout,Cin,kh,kw]");
  const int64_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int64_t cout = kernel.shape()[0], kh = kernel.shape()[2], kw = kernel.shape()[3];
  C4G_CHECK_SHAPE(kernel.shape()[1] == cin,
                  "conv2d channel mismatch: input " << cin << ", kernel " << kernel.shape()[1]);
  C4G_CHECK_SHAPE(stride >= 1, "conv2d stride must be positive");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (w + 2 * pad - kw) / stride + 1;
  C4G_CHECK_SHAPE(ho >= 1 && wo >= 1, "conv2d output would be empty");

  const int64_t krows = cin * kh * kw;
  std::vector<T> col(krows * ho * wo);
  detail::im2col2d(x.data(), cin, h, w, kh, kw, stride, pad, ho, wo, col.data());
  std::vector<T> out(cout * ho * wo);
  {
    Eigen::Map<const detail::RowMat<T>> mk(kernel.data(), cout, krows);
    Eigen::Map<const detail::RowMat<T>> mc(col.data(), krows, ho * wo);
    Eigen::Map<detail::RowMat<T>>(out.data(), cout, ho * wo).noalias() = mk * mc;
  }
  return Tensor<T>::make_op(
      {cout, ho, wo}, std::move(out), {x, kernel},
      [=](typename Tensor<T>::Node& n) {
        auto& px = *n.parents[0];
        auto& pk = *n.parents[1];
        Eigen::Map<const detail::RowMat<T>> go(n.grad.data(), cout, ho * wo);
        if (pk.requires_grad) {
          pk.ensure_grad();
          std::vector<T> col2(krows * ho * wo);
          detail::im2col2d(px.value.data(), cin, h, w, kh, kw, stride, pad, ho, wo, col2.data());
          Eigen::Map<const detail::RowMat<T>> mc(col2.data(), krows, ho * wo);
          Eigen::Map<detail::RowMat<T>>(pk.grad.data(), cout, krows).noalias() += go * mc.transpose();
        }
        if (px.requires_grad) {
          px.ensure_grad();
          std::vector<T> dcol(krows * ho * wo);
          Eigen::Map<const detail::RowMat<T>> mk(pk.value.data(), cout, krows);
          Eigen::Map<detail::RowMat<T>>(dcol.data(), krows, ho * wo).noalias() = mk.transpose() * go;
          detail::col2im2d(dcol.data(), cin, h, w, kh, kw, stride, pad, ho, wo, px.grad.data());
        }
      });
}

namespace detail {

template <typename T>
void im2col3d(const T* x, int64_t cin, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t stride, int64_t pad, int64_t dout, int64_t ho, int64_t wo, T* col) {
  const int64_t plane = ho * wo, vol = dout * plane;
  for (int64_t c = 0; c < cin; ++c)
    for (int64_t kz = 0; kz < kd; ++kz)
      for (int64_t ki = 0; ki < kh; ++ki)
        for (int64_t kj = 0; kj < kw; ++kj) {
          T* dst = col + (((c * kd + kz) * kh + ki) * kw + kj) * vol;
          for (int64_t oz = 0; oz < dout; ++oz) {
            int64_t zz = oz * stride - pad + kz;
            bool zin = zz >= 0 && zz < d;
            for (int64_t oi = 0; oi < ho; ++oi) {
              int64_t ii = oi * stride - pad + ki;
              bool iin = ii >= 0 && ii < h;
              for (int64_t oj = 0; oj < wo; ++oj) {
                int64_t jj = oj * stride - pad + kj;
                dst[(oz * ho + oi) * wo + oj] =
                    (zin && iin && jj >= 0 && jj < w) ? x[((c * d + zz) * h + ii) * w + jj] : T(0);
              }
            }
          }
        }
}

template <typename T>
void col2im3d(const T* col, int64_t cin, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t stride, int64_t pad, int64_t dout, int64_t ho, int64_t wo, T* x) {
  const int64_t vol = dout * ho * wo;
  for (int64_t c = 0; c < cin; ++c)
    for (int64_t kz = 0; kz < kd; ++kz)
      for (int64_t ki = 0; ki < kh; ++ki)
        for (int64_t kj = 0; kj < kw; ++kj) {
          const T* src = col + (((c * kd + kz) * kh + ki) * kw + kj) * vol;
          for (int64_t oz = 0; oz < dout; ++oz) {
            int64_t zz = oz * stride - pad + kz;
            if (zz < 0 || zz >= d) continue;
            for (int64_t oi = 0; oi < ho; ++oi) {
              int64_t ii = oi * stride - pad + ki;
              if (ii < 0 || ii >= h) continue;
              for (int64_t oj = 0; oj < wo; ++oj) {
                int64_t jj = oj * stride - pad + kj;
                if (jj >= 0 && jj < w) x[((c * d + zz) * h + ii) * w + jj] += src[(oz * ho + oi) * wo + oj];
              }
            }
          }
        }
}

}  // namespace detail

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, int64_t stride = 1, int64_t pad = 0) {
  C4G_CHECK_SHAPE(x.rank() == 4, "conv3d input must be [C,D,H,W]");
  C4G_CHECK_SHAPE(kernel.rank() == 5, "conv3d kernel must be [Cout,Cin,kd,kh,kw]");
  const int64_t cin = x.shape()[0], d = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int64_t cout = kernel.shape()[0];
  const int64_t kd = kernel.shape()[2], kh = kernel.shape()[3], kw = kernel.shape()[4];
  C4G_CHECK_SHAPE(kernel.shape()[1] == cin, "conv3d channel mismatch");
  const int64_t dout = (d + 2 * pad - kd) / stride + 1;
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (w + 2 * pad - kw) / stride + 1;
  C4G_CHECK_SHAPE(dout >= 1 && ho >= 1 && wo >= 1, "conv3d output would be empty");

  const int64_t krows = cin * kd * kh * kw, vol = dout * ho * wo;
  std::vector<T> col(krows * vol);
  detail::im2col3d(x.data(), cin, d, h, w, kd, kh, kw, stride, pad, dout, ho, wo, col.data());
  std::vector<T> out(cout * vol);
  {
    Eigen::Map<const detail::RowMat<T>> mk(kernel.data(), cout, krows);
    Eigen::Map<const detail::RowMat<T>> mc(col.data(), krows, vol);
    Eigen::Map<detail::RowMat<T>>(out.data(), cout, vol).noalias() = mk * mc;
  }
  return Tensor<T>::make_op(
      {cout, dout, ho, wo}, std::move(out), {x, kernel},
      [=](typename Tensor<T>::Node& n) {
        auto& px = *n.parents[0];
        auto& pk = *n.parents[1];
        Eigen::Map<const detail::RowMat<T>> go(n.grad.data(), cout, vol);
        if (pk.requires_grad) {
          pk.ensure_grad();
          std::vector<T> col2(krows * vol);
          detail::im2col3d(px.value.data(), cin, d, h, w, kd, kh, kw, stride, pad, dout, ho, wo,
                           col2.data());
          Eigen::Map<const detail::RowMat<T>> mc(col2.data(), krows, vol);
          Eigen::Map<detail::RowMat<T>>(pk.grad.data(), cout, krows).noalias() += go * mc.transpose();
        }
        if (px.requires_grad) {
          px.ensure_grad();
          std::vector<T> dcol(krows * vol);
          Eigen::Map<const detail::RowMat<T>> mk(pk.value.data(), cout, krows);
          Eigen::Map<detail::RowMat<T>>(dcol.data(), krows, vol).noalias() = mk.transpose() * go;
          detail::col2im3d(dcol.data(), cin, d, h, w, kd, kh, kw, stride, pad, dout, ho, wo,
                           px.grad.data());
        }
      });
}

// Non-overlapping 2x2 mean pooling. Commutes exactly with the 90-degree
// index rotation and with axis flips on even extents, which stride-2
// subsampling does not; the equivariant UNet downsamples with this.
template <typename T>
Tensor<T> avgpool2x2(const Tensor<T>& x) {
  C4G_CHECK_SHAPE(x.rank() == 3, "avgpool2x2 input must be [C,H,W]");
  const int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  C4G_CHECK(h % 2 == 0 && w % 2 == 0, ErrorKind::kGeometry,
            "avgpool2x2 requires even extents, got " << h << "x" << w);
  const int64_t ho = h / 2, wo = w / 2;
  std::vector<T> out(c * ho * wo);
  const T* src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < ho; ++i)
      for (int64_t j = 0; j < wo; ++j) {
        const T* p = src + (ch * h + 2 * i) * w + 2 * j;
        out[(ch * ho + i) * wo + j] = T(0.25) * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  return Tensor<T>::make_op({c, ho, wo}, std::move(out), {x},
                            [c, h, w, ho, wo](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t ch = 0; ch < c; ++ch)
                                for (int64_t i = 0; i < ho; ++i)
                                  for (int64_t j = 0; j < wo; ++j) {
                                    T g = T(0.25) * n.grad[(ch * ho + i) * wo + j];
                                    T* q = p.grad.data() + (ch * h + 2 * i) * w + 2 * j;
                                    q[0] += g;
                                    q[1] += g;
                                    q[w] += g;
                                    q[w + 1] += g;
                                  }
                            });
}

// Nearest-neighbour x2 upsampling (replication); also commutes exactly with
// the 90-degree index rotation.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  C4G_CHECK_SHAPE(x.rank() == 3, "upsample2x input must be [C,H,W]");
  const int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const int64_t ho = 2 * h, wo = 2 * w;
  std::vector<T> out(c * ho * wo);
  const T* src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < ho; ++i)
      for (int64_t j = 0; j < wo; ++j)
        out[(ch * ho + i) * wo + j] = src[(ch * h + i / 2) * w + j / 2];
  return Tensor<T>::make_op({c, ho, wo}, std::move(out), {x},
                            [c, h, w, ho, wo](typename Tensor<T>::Node& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t ch = 0; ch < c; ++ch)
                                for (int64_t i = 0; i < ho; ++i)
                                  for (int64_t j = 0; j < wo; ++j)
                                    p.grad[(ch * h + i / 2) * w + j / 2] +=
                                        n.grad[(ch * ho + i) * wo + j];
                            });
}

}  // namespace c4g
