#include "c4g/group.hpp"

#include <sstream>

namespace c4g {

GroupElement compose(const GroupElement& g, const GroupElement& h) {
  C4G_CHECK(g.group == h.group, ErrorKind::kGroupMismatch,
            "cannot compose elements of C" << g.group.order << " and C" << h.group.order);
  return GroupElement(g.group, g.index + h.index);
}

GroupElement inverse(const GroupElement& g) {
  return GroupElement(g.group, g.group.order - g.index);
}

RepresentationSpec RepresentationSpec::trivials(CyclicGroup g, int count) {
  return RepresentationSpec(g, std::vector<RepBlock>(count, RepBlock::trivial()));
}

RepresentationSpec RepresentationSpec::regulars(CyclicGroup g, int count) {
  return RepresentationSpec(g, std::vector<RepBlock>(count, RepBlock::regular()));
}

RepresentationSpec RepresentationSpec::vector3_columns(CyclicGroup g, int count) {
  std::vector<RepBlock> blocks;
  for (int i = 0; i < count; ++i) {
    blocks.push_back(RepBlock::irrep(1));
    blocks.push_back(RepBlock::trivial());
  }
  return RepresentationSpec(g, std::move(blocks));
}

int RepresentationSpec::dim() const {
  int d = 0;
  for (const auto& b : blocks_) d += b.dim(group_);
  return d;
}

int RepresentationSpec::block_offset(int b) const {
  int off = 0;
  for (int i = 0; i < b; ++i) off += blocks_[i].dim(group_);
  return off;
}

Eigen::Matrix2d rotation2d(double theta) {
  Eigen::Matrix2d r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

Eigen::MatrixXd block_matrix(const RepBlock& block, const GroupElement& g) {
  const int n = g.group.order;
  switch (block.kind) {
    case BlockKind::kTrivial:
      return Eigen::MatrixXd::Identity(1, 1);
    case BlockKind::kIrrep: {
      if (block.frequency == 0) return Eigen::MatrixXd::Identity(1, 1);
      // Exact entries for the multiples of 90/45 degrees so that C4 matrices
      // are exact signed permutations.
      double theta = block.frequency * g.angle();
      Eigen::Matrix2d r = rotation2d(theta);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          if (std::abs(r(i, j)) < 1e-15) r(i, j) = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          if (std::abs(r(i, j) - 1.0) < 1e-15) r(i, j) = 1.0;
          if (std::abs(r(i, j) + 1.0) < 1e-15) r(i, j) = -1.0;
        }
      return r;
    }
    case BlockKind::kRegular: {
      // rho_reg(r^k) x shifts entries k positions to the right.
      Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) p(i, (i - g.index % n + n) % n) = 1.0;
      return p;
    }
  }
  return {};
}

Eigen::MatrixXd RepresentationSpec::matrix(const GroupElement& g) const {
  C4G_CHECK(g.group == group_, ErrorKind::kGroupMismatch,
            "representation is over C" << group_.order << ", element is in C" << g.group.order);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim(), dim());
  int off = 0;
  for (const auto& b : blocks_) {
    const int d = b.dim(group_);
    m.block(off, off, d, d) = block_matrix(b, g);
    off += d;
  }
  return m;
}

RepresentationSpec RepresentationSpec::concat(const RepresentationSpec& other) const {
  C4G_CHECK(group_ == other.group_, ErrorKind::kGroupMismatch, "concat of specs over different groups");
  std::vector<RepBlock> blocks = blocks_;
  blocks.insert(blocks.end(), other.blocks_.begin(), other.blocks_.end());
  return RepresentationSpec(group_, std::move(blocks));
}

std::string RepresentationSpec::describe() const {
  std::ostringstream oss;
  oss << "C" << group_.order << "[";
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (i) oss << ",";
    switch (blocks_[i].kind) {
      case BlockKind::kTrivial: oss << "triv"; break;
      case BlockKind::kIrrep: oss << "irrep" << blocks_[i].frequency; break;
      case BlockKind::kRegular: oss << "reg"; break;
    }
  }
  oss << "]";
  return oss.str();
}

FourierC4 fourier_c4(const Eigen::Vector4d& x) {
  // Frequencies 0,1,2 with 1/4 averaging on frequency 0 and 2, 1/2 on the
  // two-dimensional frequency-1 pair; the inverse below compensates.
  FourierC4 f;
  f.type0 = 0.25 * (x[0] + x[1] + x[2] + x[3]);
  f.type1[0] = 0.5 * (x[0] - x[2]);
  f.type1[1] = 0.5 * (x[1] - x[3]);
  f.type2 = 0.25 * (x[0] - x[1] + x[2] - x[3]);
  return f;
}

Eigen::Vector4d fourier_c4_inverse(const FourierC4& f) {
  Eigen::Vector4d x;
  // x_k = c0 + a*cos(pi k/2) + b*sin(pi k/2) + c2*(-1)^k
  x[0] = f.type0 + f.type1[0] + f.type2;
  x[1] = f.type0 + f.type1[1] - f.type2;
  x[2] = f.type0 - f.type1[0] + f.type2;
  x[3] = f.type0 - f.type1[1] - f.type2;
  return x;
}

}  // namespace c4g
