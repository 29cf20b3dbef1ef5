// Cyclic-group algebra and representation matrices.
//
// Conventions used throughout the library:
//   * r^1 is the generator; its planar rotation matrix (frequency 1) is
//     R(90 deg) = [[0,-1],[1,0]] for C4.
//   * The regular representation of r^1 shifts channel vectors one position
//     to the right: (x1,x2,x3,x4) -> (x4,x1,x2,x3).
//   * On grids, r^1 maps array index (i,j) to (j, E-1-i); with axis 0 read as
//     y and axis 1 as x this is exactly R(90 deg) about the grid center,
//     which lies between cells for even extents.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "c4g/error.hpp"

namespace c4g {

struct CyclicGroup {
  int order = 4;

  explicit CyclicGroup(int n = 4) : order(n) {
    C4G_CHECK_CONFIG(n == 4 || n == 8, "cyclic group order must be 4 or 8, got " << n);
  }
  bool operator==(const CyclicGroup& o) const { return order == o.order; }
};

struct GroupElement {
  CyclicGroup group;
  int index = 0;  // residue mod order

  GroupElement(CyclicGroup g, int k) : group(g), index(((k % g.order) + g.order) % g.order) {}

  double angle() const { return 2.0 * M_PI * index / group.order; }
  bool is_identity() const { return index == 0; }
};

GroupElement compose(const GroupElement& g, const GroupElement& h);
GroupElement inverse(const GroupElement& g);

enum class BlockKind : uint8_t { kTrivial, kIrrep, kRegular };

struct RepBlock {
  BlockKind kind = BlockKind::kTrivial;
  int frequency = 0;  // meaningful for kIrrep only

  static RepBlock trivial() { return {BlockKind::kTrivial, 0}; }
  static RepBlock irrep(int omega) { return {BlockKind::kIrrep, omega}; }
  static RepBlock regular() { return {BlockKind::kRegular, 0}; }

  int dim(const CyclicGroup& group) const {
    switch (kind) {
      case BlockKind::kTrivial: return 1;
      case BlockKind::kIrrep: return frequency == 0 ? 1 : 2;
      case BlockKind::kRegular: return group.order;
    }
    return 0;
  }
  bool operator==(const RepBlock& o) const {
    return kind == o.kind && (kind != BlockKind::kIrrep || frequency == o.frequency);
  }
};

// An ordered direct sum of representation blocks; yields a concrete matrix
// rho(g) per group element.
class RepresentationSpec {
 public:
  RepresentationSpec() = default;
  RepresentationSpec(CyclicGroup group, std::vector<RepBlock> blocks)
      : group_(group), blocks_(std::move(blocks)) {}

  static RepresentationSpec trivials(CyclicGroup g, int count);
  static RepresentationSpec regulars(CyclicGroup g, int count);
  // `count` copies of irrep(1) + trivial, the typing of a 3D vector whose
  // (x,y) part rotates and whose z part is fixed.
  static RepresentationSpec vector3_columns(CyclicGroup g, int count);

  const CyclicGroup& group() const { return group_; }
  const std::vector<RepBlock>& blocks() const { return blocks_; }
  int dim() const;
  bool empty() const { return blocks_.empty(); }

  // Offset of block b within the channel vector.
  int block_offset(int b) const;

  // Dense rho(g); block diagonal, orthogonal for all supported block kinds.
  Eigen::MatrixXd matrix(const GroupElement& g) const;

  RepresentationSpec concat(const RepresentationSpec& other) const;
  bool operator==(const RepresentationSpec& o) const {
    return group_ == o.group_ && blocks_ == o.blocks_;
  }

  std::string describe() const;

 private:
  CyclicGroup group_{4};
  std::vector<RepBlock> blocks_;
};

// Planar rotation matrix R(theta).
Eigen::Matrix2d rotation2d(double theta);

// Block matrix for one representation block.
Eigen::MatrixXd block_matrix(const RepBlock& block, const GroupElement& g);

// Discrete Fourier transform over C4 with real packing and 1/n forward
// normalization: type0 equals the mean of the regular vector.
struct FourierC4 {
  double type0 = 0.0;
  Eigen::Vector2d type1 = Eigen::Vector2d::Zero();
  double type2 = 0.0;
};

FourierC4 fourier_c4(const Eigen::Vector4d& regular);
Eigen::Vector4d fourier_c4_inverse(const FourierC4& f);

}  // namespace c4g
