// Typed feature fields on square grids and the exact C4 group action.
//
// Index convention (shared by every module): array axis 0 of a 2D field is
// read as y, axis 1 as x. The generator r^1 maps index (i,j) to (j, E-1-i),
// which is the +90 degree rotation about the grid center; for even extents
// the center lies between cells. 3D volumes are [C,Z,Y,X] and rotate in the
// (Y,X) axes with Z fixed. The action is an exact index permutation combined
// with the (signed permutation) representation matrix, so no floating-point
// error is introduced.
#pragma once

#include <Eigen/Dense>
#include <array>

#include "c4g/group.hpp"
#include "c4g/tensor.hpp"

namespace c4g {

// Maps grid index under r^k on an ExE grid. k is taken mod 4.
inline std::pair<int64_t, int64_t> rotate_index_90(int64_t i, int64_t j, int64_t extent, int k) {
  k = ((k % 4) + 4) % 4;
  for (int s = 0; s < k; ++s) {
    int64_t ni = j, nj = extent - 1 - i;
    i = ni;
    j = nj;
  }
  return {i, j};
}

// Physical placement of a rank-2 or rank-3 grid in the workspace.
struct GridGeometry {
  int rank = 3;
  std::vector<int64_t> extents;  // rank entries; [Z,Y,X] for rank 3, [H,W] for 2
  double cell_size = 0.0075;     // meters per voxel
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // world position of voxel (0,0,0) corner

  GridGeometry() = default;
  GridGeometry(int r, std::vector<int64_t> e, double cell, Eigen::Vector3d org)
      : rank(r), extents(std::move(e)), cell_size(cell), origin(std::move(org)) {
    C4G_CHECK(rank == 2 || rank == 3, ErrorKind::kGeometry, "grid rank must be 2 or 3");
    C4G_CHECK(static_cast<int>(extents.size()) == rank, ErrorKind::kGeometry,
              "extent count must match rank");
    for (auto ext : extents)
      C4G_CHECK(ext > 0, ErrorKind::kGeometry, "extents must be positive");
    if (rank == 3) {
      C4G_CHECK(extents[1] == extents[2], ErrorKind::kGeometry,
                "3D grid must have equal y/x extents for exact C4 actions");
    } else {
      C4G_CHECK(extents[0] == extents[1], ErrorKind::kGeometry,
                "2D grid must be square for exact C4 actions");
    }
  }

  static GridGeometry cube(int64_t s, double workspace_m) {
    return GridGeometry(3, {s, s, s}, workspace_m / static_cast<double>(s),
                        Eigen::Vector3d::Zero());
  }

  // Voxel centers sit at integer continuous indices.
  double world_to_index(double world, int axis) const {
    return (world - origin[axis]) / cell_size - 0.5;
  }
  double index_to_world(double index, int axis) const {
    return origin[axis] + (index + 0.5) * cell_size;
  }
};

// Signed channel permutation equivalent to rho(g); valid whenever rho(g) is
// a signed permutation matrix, which holds for every C4 block kind.
struct SignedPerm {
  std::vector<int> source;
  std::vector<double> sign;
};

inline SignedPerm signed_permutation(const RepresentationSpec& spec, const GroupElement& g) {
  Eigen::MatrixXd m = spec.matrix(g);
  SignedPerm perm;
  const int d = static_cast<int>(m.rows());
  perm.source.resize(d);
  perm.sign.resize(d);
  for (int r = 0; r < d; ++r) {
    int nz = -1;
    for (int c = 0; c < d; ++c) {
      if (m(r, c) != 0.0) {
        C4G_CHECK(nz < 0 && (m(r, c) == 1.0 || m(r, c) == -1.0), ErrorKind::kConfig,
                  "rho(g) is not a signed permutation; exact grid action unsupported");
        nz = c;
      }
    }
    C4G_CHECK(nz >= 0, ErrorKind::kConfig, "rho(g) has a zero row");
    perm.source[r] = nz;
    perm.sign[r] = m(r, nz);
  }
  return perm;
}

template <typename T>
struct FeatureField2d {
  Tensor<T> data;  // [C,H,W]
  RepresentationSpec spec;

  int64_t channels() const { return data.shape()[0]; }
  int64_t extent() const { return data.shape()[1]; }
};

template <typename T>
struct FeatureField3d {
  Tensor<T> data;  // [C,Z,Y,X]
  RepresentationSpec spec;
};

// out(p) = rho(g) . in(g^-1 . p) on a square 2D field. Exact permutation;
// not differentiable (it transforms test/data inputs, never live features).
template <typename T>
Tensor<T> act_on_grid2d(const GroupElement& g, const Tensor<T>& x, const RepresentationSpec& spec) {
  C4G_CHECK(g.group.order == 4, ErrorKind::kConfig, "grid actions are exact for C4 only");
  C4G_CHECK_SHAPE(x.rank() == 3, "act_on_grid2d input must be [C,H,W]");
  C4G_CHECK(x.shape()[1] == x.shape()[2], ErrorKind::kGeometry,
            "act_on_grid2d requires a square grid, got " << shape_str(x.shape()));
  C4G_CHECK_SHAPE(x.shape()[0] == spec.dim(), "channel count does not match spec dim");
  if (g.is_identity()) return Tensor<T>::from_values(x.shape(), x.values());
  const int64_t c = x.shape()[0], e = x.shape()[1];
  SignedPerm perm = signed_permutation(spec, g);
  std::vector<T> out(x.numel());
  const T* src = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    const T s = static_cast<T>(perm.sign[ch]);
    const T* plane = src + perm.source[ch] * e * e;
    T* dst = out.data() + ch * e * e;
    for (int64_t i = 0; i < e; ++i)
      for (int64_t j = 0; j < e; ++j) {
        auto [ni, nj] = rotate_index_90(i, j, e, g.index);
        dst[ni * e + nj] = s * plane[i * e + j];
      }
  }
  return Tensor<T>::from_values(x.shape(), std::move(out));
}

// 3D version: rotates (y,x) indices with z fixed.
template <typename T>
Tensor<T> act_on_grid3d(const GroupElement& g, const Tensor<T>& x, const RepresentationSpec& spec) {
  C4G_CHECK(g.group.order == 4, ErrorKind::kConfig, "grid actions are exact for C4 only");
  C4G_CHECK_SHAPE(x.rank() == 4, "act_on_grid3d input must be [C,Z,Y,X]");
  C4G_CHECK(x.shape()[2] == x.shape()[3], ErrorKind::kGeometry,
            "act_on_grid3d requires equal y/x extents");
  C4G_CHECK_SHAPE(x.shape()[0] == spec.dim(), "channel count does not match spec dim");
  if (g.is_identity()) return Tensor<T>::from_values(x.shape(), x.values());
  const int64_t c = x.shape()[0], d = x.shape()[1], e = x.shape()[2];
  SignedPerm perm = signed_permutation(spec, g);
  std::vector<T> out(x.numel());
  const T* src = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    const T s = static_cast<T>(perm.sign[ch]);
    for (int64_t z = 0; z < d; ++z) {
      const T* plane = src + (perm.source[ch] * d + z) * e * e;
      T* dst = out.data() + (ch * d + z) * e * e;
      for (int64_t i = 0; i < e; ++i)
        for (int64_t j = 0; j < e; ++j) {
          auto [ni, nj] = rotate_index_90(i, j, e, g.index);
          dst[ni * e + nj] = s * plane[i * e + j];
        }
    }
  }
  return Tensor<T>::from_values(x.shape(), std::move(out));
}

template <typename T>
FeatureField2d<T> act_on_field(const GroupElement& g, const FeatureField2d<T>& f) {
  return {act_on_grid2d(g, f.data, f.spec), f.spec};
}

template <typename T>
FeatureField3d<T> act_on_field(const GroupElement& g, const FeatureField3d<T>& f) {
  return {act_on_grid3d(g, f.data, f.spec), f.spec};
}

// Flip along the last (x) axis of a 2D array tensor [C,H,W]; the side-plane
// transformation rule uses this.
template <typename T>
Tensor<T> flip_x(const Tensor<T>& x) {
  C4G_CHECK_SHAPE(x.rank() == 3, "flip_x input must be [C,H,W]");
  const int64_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  std::vector<T> out(x.numel());
  const T* src = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        out[(ch * h + i) * w + j] = src[(ch * h + i) * w + (w - 1 - j)];
  return Tensor<T>::from_values(x.shape(), std::move(out));
}

}  // namespace c4g
