// Bilinear and trilinear field sampling, differentiable w.r.t. both the
// field values and the sample coordinates.
//
// Coordinates are continuous array indices in axis order, i.e. a 2D point is
// (i, j) over a [C,H,W] field and a 3D point is (d, i, j) over [C,D,H,W].
// Two boundary modes:
//   kClamp - coordinates clamp to the valid range (feature-query contract);
//            the coordinate gradient is zero at a clamped boundary.
//   kZero  - out-of-range neighbours read zero, matching the zero padding of
//            plain convolution (deformable sampling contract).
#pragma once

#include <cmath>

#include "c4g/tensor.hpp"

namespace c4g {

enum class BoundaryMode { kClamp, kZero };

namespace detail {

template <typename T>
struct LinTap {
  int64_t i0, i1;
  T f;       // fractional part
  bool ok0, ok1;
  T dcoord;  // 1 where the coordinate still moves the sample, 0 if clamped
};

template <typename T>
LinTap<T> lin_tap(T coord, int64_t extent, BoundaryMode mode) {
  LinTap<T> t;
  t.dcoord = T(1);
  if (mode == BoundaryMode::kClamp) {
    T hi = static_cast<T>(extent - 1);
    if (coord <= T(0)) {
      coord = T(0);
      t.dcoord = T(0);
    } else if (coord >= hi) {
      coord = hi;
      t.dcoord = T(0);
    }
  }
  T fl = std::floor(coord);
  t.i0 = static_cast<int64_t>(fl);
  t.i1 = t.i0 + 1;
  t.f = coord - fl;
  t.ok0 = t.i0 >= 0 && t.i0 < extent;
  t.ok1 = t.i1 >= 0 && t.i1 < extent;
  if (mode == BoundaryMode::kClamp && !t.ok1) {
    t.i1 = extent - 1;  // weight on it is zero whenever this happens
    t.ok1 = true;
  }
  return t;
}

}  // namespace detail

// field [C,H,W], points [N,2] -> [N,C]
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& field, const Tensor<T>& points,
                          BoundaryMode mode = BoundaryMode::kClamp) {
  C4G_CHECK_SHAPE(field.rank() == 3, "bilinear_sample field must be [C,H,W]");
  C4G_CHECK_SHAPE(points.rank() == 2 && points.shape()[1] == 2,
                  "bilinear_sample points must be [N,2]");
  const int64_t c = field.shape()[0], h = field.shape()[1], w = field.shape()[2];
  const int64_t n = points.shape()[0];
  std::vector<T> out(n * c, T(0));
  const T* f = field.data();
  const T* pts = points.data();
  for (int64_t p = 0; p < n; ++p) {
    auto ti = detail::lin_tap(pts[2 * p], h, mode);
    auto tj = detail::lin_tap(pts[2 * p + 1], w, mode);
    const T w00 = (T(1) - ti.f) * (T(1) - tj.f), w01 = (T(1) - ti.f) * tj.f;
    const T w10 = ti.f * (T(1) - tj.f), w11 = ti.f * tj.f;
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* plane = f + ch * h * w;
      T v = T(0);
      if (ti.ok0 && tj.ok0) v += w00 * plane[ti.i0 * w + tj.i0];
      if (ti.ok0 && tj.ok1) v += w01 * plane[ti.i0 * w + tj.i1];
      if (ti.ok1 && tj.ok0) v += w10 * plane[ti.i1 * w + tj.i0];
      if (ti.ok1 && tj.ok1) v += w11 * plane[ti.i1 * w + tj.i1];
      out[p * c + ch] = v;
    }
  }
  return Tensor<T>::make_op(
      {n, c}, std::move(out), {field, points},
      [c, h, w, n, mode](typename Tensor<T>::Node& node) {
        auto& pf = *node.parents[0];
        auto& pp = *node.parents[1];
        const bool gf = pf.requires_grad, gp = pp.requires_grad;
        if (gf) pf.ensure_grad();
        if (gp) pp.ensure_grad();
        const T* pts = pp.value.data();
        const T* f = pf.value.data();
        for (int64_t p = 0; p < n; ++p) {
          auto ti = detail::lin_tap(pts[2 * p], h, mode);
          auto tj = detail::lin_tap(pts[2 * p + 1], w, mode);
          const T fi = ti.f, fj = tj.f;
          for (int64_t ch = 0; ch < c; ++ch) {
            const T g = node.grad[p * c + ch];
            if (g == T(0)) continue;
            const T* plane = f + ch * h * w;
            T* gplane = gf ? pf.grad.data() + ch * h * w : nullptr;
            T v00 = 0, v01 = 0, v10 = 0, v11 = 0;
            if (ti.ok0 && tj.ok0) {
              v00 = plane[ti.i0 * w + tj.i0];
              if (gf) gplane[ti.i0 * w + tj.i0] += g * (T(1) - fi) * (T(1) - fj);
            }
            if (ti.ok0 && tj.ok1) {
              v01 = plane[ti.i0 * w + tj.i1];
              if (gf) gplane[ti.i0 * w + tj.i1] += g * (T(1) - fi) * fj;
            }
            if (ti.ok1 && tj.ok0) {
              v10 = plane[ti.i1 * w + tj.i0];
              if (gf) gplane[ti.i1 * w + tj.i0] += g * fi * (T(1) - fj);
            }
            if (ti.ok1 && tj.ok1) {
              v11 = plane[ti.i1 * w + tj.i1];
              if (gf) gplane[ti.i1 * w + tj.i1] += g * fi * fj;
            }
            if (gp) {
              // d(value)/d(coord i) = (1-fj)(v10 - v00) + fj (v11 - v01)
              pp.grad[2 * p] += g * ti.dcoord * ((T(1) - fj) * (v10 - v00) + fj * (v11 - v01));
              pp.grad[2 * p + 1] += g * tj.dcoord * ((T(1) - fi) * (v01 - v00) + fi * (v11 - v10));
            }
          }
        }
      });
}

// field [C,D,H,W], points [N,3] -> [N,C]
template <typename T>
Tensor<T> trilinear_sample(const Tensor<T>& field, const Tensor<T>& points,
                           BoundaryMode mode = BoundaryMode::kClamp) {
  C4G_CHECK_SHAPE(field.rank() == 4, "trilinear_sample field must be [C,D,H,W]");
  C4G_CHECK_SHAPE(points.rank() == 2 && points.shape()[1] == 3,
                  "trilinear_sample points must be [N,3]");
  const int64_t c = field.shape()[0], d = field.shape()[1], h = field.shape()[2],
                w = field.shape()[3];
  const int64_t n = points.shape()[0];
  std::vector<T> out(n * c, T(0));
  const T* f = field.data();
  const T* pts = points.data();
  auto corner_w = [](T fz, T fi, T fj, int a, int b, int e) {
    return (a ? fz : T(1) - fz) * (b ? fi : T(1) - fi) * (e ? fj : T(1) - fj);
  };
  for (int64_t p = 0; p < n; ++p) {
    auto tz = detail::lin_tap(pts[3 * p], d, mode);
    auto ti = detail::lin_tap(pts[3 * p + 1], h, mode);
    auto tj = detail::lin_tap(pts[3 * p + 2], w, mode);
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* vol = f + ch * d * h * w;
      T v = T(0);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          for (int e = 0; e < 2; ++e) {
            bool okz = a ? tz.ok1 : tz.ok0, oki = b ? ti.ok1 : ti.ok0, okj = e ? tj.ok1 : tj.ok0;
            if (!(okz && oki && okj)) continue;
            int64_t zz = a ? tz.i1 : tz.i0, ii = b ? ti.i1 : ti.i0, jj = e ? tj.i1 : tj.i0;
            v += corner_w(tz.f, ti.f, tj.f, a, b, e) * vol[(zz * h + ii) * w + jj];
          }
      out[p * c + ch] = v;
    }
  }
  return Tensor<T>::make_op(
      {n, c}, std::move(out), {field, points},
      [c, d, h, w, n, mode](typename Tensor<T>::Node& node) {
        auto& pf = *node.parents[0];
        auto& pp = *node.parents[1];
        const bool gf = pf.requires_grad, gp = pp.requires_grad;
        if (gf) pf.ensure_grad();
        if (gp) pp.ensure_grad();
        const T* pts = pp.value.data();
        const T* f = pf.value.data();
        for (int64_t p = 0; p < n; ++p) {
          auto tz = detail::lin_tap(pts[3 * p], d, mode);
          auto ti = detail::lin_tap(pts[3 * p + 1], h, mode);
          auto tj = detail::lin_tap(pts[3 * p + 2], w, mode);
          for (int64_t ch = 0; ch < c; ++ch) {
            const T g = node.grad[p * c + ch];
            if (g == T(0)) continue;
            const T* vol = f + ch * d * h * w;
            T* gvol = gf ? pf.grad.data() + ch * d * h * w : nullptr;
            T corner[2][2][2] = {};
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e) {
                  bool okz = a ? tz.ok1 : tz.ok0, oki = b ? ti.ok1 : ti.ok0,
                       okj = e ? tj.ok1 : tj.ok0;
                  if (!(okz && oki && okj)) continue;
                  int64_t zz = a ? tz.i1 : tz.i0, ii = b ? ti.i1 : ti.i0, jj = e ? tj.i1 : tj.i0;
                  corner[a][b][e] = vol[(zz * h + ii) * w + jj];
                  T wz = a ? tz.f : T(1) - tz.f;
                  T wi = b ? ti.f : T(1) - ti.f;
                  T wj = e ? tj.f : T(1) - tj.f;
                  if (gf) gvol[(zz * h + ii) * w + jj] += g * wz * wi * wj;
                }
            auto lerp2 = [&](int axis) {
              // derivative of the trilinear value along one axis
              T acc = T(0);
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e) {
                  T wb, we;
                  T diff;
                  if (axis == 0) {
                    wb = b ? ti.f : T(1) - ti.f;
                    we = e ? tj.f : T(1) - tj.f;
                    diff = corner[1][b][e] - corner[0][b][e];
                  } else if (axis == 1) {
                    wb = b ? tz.f : T(1) - tz.f;
                    we = e ? tj.f : T(1) - tj.f;
                    diff = corner[b][1][e] - corner[b][0][e];
                  } else {
                    wb = b ? tz.f : T(1) - tz.f;
                    we = e ? ti.f : T(1) - ti.f;
                    diff = corner[b][e][1] - corner[b][e][0];
                  }
                  acc += wb * we * diff;
                }
              return acc;
            };
            if (gp) {
              pp.grad[3 * p] += g * tz.dcoord * lerp2(0);
              pp.grad[3 * p + 1] += g * ti.dcoord * lerp2(1);
              pp.grad[3 * p + 2] += g * tj.dcoord * lerp2(2);
            }
          }
        }
      });
}

}  // namespace c4g
