#include <gtest/gtest.h>

#include "c4g/field.hpp"
#include "c4g/group.hpp"
#include "c4g/rng.hpp"

using namespace c4g;

TEST(GroupAlgebra, InversePair) {
  CyclicGroup c4(4);
  auto prod = compose(GroupElement(c4, 1), GroupElement(c4, 3));
  EXPECT_EQ(prod.index, 0);
}

TEST(GroupAlgebra, ModularAddition) {
  CyclicGroup c4(4);
  EXPECT_EQ(compose(GroupElement(c4, 2), GroupElement(c4, 3)).index, 1);
}

TEST(GroupAlgebra, C8Inverse) {
  CyclicGroup c8(8);
  EXPECT_EQ(inverse(GroupElement(c8, 5)).index, 3);
}

TEST(GroupAlgebra, MismatchedGroupsThrow) {
  try {
    compose(GroupElement(CyclicGroup(4), 1), GroupElement(CyclicGroup(8), 1));
    FAIL() << "expected group-mismatch error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGroupMismatch);
  }
}

TEST(GroupAlgebra, UnsupportedOrderThrows) {
  EXPECT_THROW(CyclicGroup(5), Error);
}

TEST(RepMatrix, RegularShiftsRight) {
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::regulars(c4, 1);
  Eigen::MatrixXd m = spec.matrix(GroupElement(c4, 1));
  Eigen::Vector4d x(1, 2, 3, 4);
  Eigen::Vector4d y = m * x;
  EXPECT_EQ(y[0], 4);
  EXPECT_EQ(y[1], 1);
  EXPECT_EQ(y[2], 2);
  EXPECT_EQ(y[3], 3);
}

TEST(RepMatrix, IdentityElement) {
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::trivial(), RepBlock::irrep(1), RepBlock::regular()});
  Eigen::MatrixXd m = spec.matrix(GroupElement(c4, 0));
  EXPECT_TRUE(m.isIdentity(0.0));
}

TEST(RepMatrix, Irrep1Generator) {
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::irrep(1)});
  Eigen::MatrixXd m = spec.matrix(GroupElement(c4, 1));
  Eigen::Matrix2d want;
  want << 0, -1, 1, 0;
  EXPECT_TRUE(m.isApprox(want, 0.0));
}

TEST(RepMatrix, HomomorphismExhaustive) {
  CyclicGroup c4(4);
  std::vector<RepresentationSpec> specs = {
      RepresentationSpec::trivials(c4, 2),
      RepresentationSpec(c4, {RepBlock::irrep(1), RepBlock::irrep(2)}),
      RepresentationSpec::regulars(c4, 2),
      RepresentationSpec(c4, {RepBlock::trivial(), RepBlock::irrep(1), RepBlock::regular()}),
  };
  for (const auto& spec : specs) {
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        GroupElement ga(c4, a), gb(c4, b);
        Eigen::MatrixXd lhs = spec.matrix(compose(ga, gb));
        Eigen::MatrixXd rhs = spec.matrix(ga) * spec.matrix(gb);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15) << spec.describe();
      }
  }
}

TEST(FourierC4, ConstantSignal) {
  auto f = fourier_c4(Eigen::Vector4d(3, 3, 3, 3));
  EXPECT_DOUBLE_EQ(f.type0, 3.0);  // mean normalization
  EXPECT_DOUBLE_EQ(f.type1[0], 0.0);
  EXPECT_DOUBLE_EQ(f.type1[1], 0.0);
  EXPECT_DOUBLE_EQ(f.type2, 0.0);
}

TEST(FourierC4, ImpulseMatchesDirectDft) {
  // Oracle: direct 4-point DFT of (1,0,0,0) with the library's packing:
  // c0 = mean, (a,b) = ((x0-x2)/2, (x1-x3)/2), c2 = alternating mean.
  auto f = fourier_c4(Eigen::Vector4d(1, 0, 0, 0));
  EXPECT_DOUBLE_EQ(f.type0, 0.25);
  EXPECT_DOUBLE_EQ(f.type1[0], 0.5);
  EXPECT_DOUBLE_EQ(f.type1[1], 0.0);
  EXPECT_DOUBLE_EQ(f.type2, 0.25);
}

TEST(FourierC4, RoundtripAndParseval) {
  Rng rng(7);
  for (int it = 0; it < 50; ++it) {
    Eigen::Vector4d x(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    auto f = fourier_c4(x);
    Eigen::Vector4d back = fourier_c4_inverse(f);
    EXPECT_LT((x - back).cwiseAbs().maxCoeff(), 1e-12);
    // Parseval with the chosen normalization constants.
    double lhs = x.squaredNorm();
    double rhs = 4 * f.type0 * f.type0 + 2 * f.type1.squaredNorm() + 4 * f.type2 * f.type2;
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(FourierC4, ShiftRotatesType1) {
  Rng rng(8);
  CyclicGroup c4(4);
  RepresentationSpec reg = RepresentationSpec::regulars(c4, 1);
  for (int k = 0; k < 4; ++k) {
    Eigen::Vector4d x(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector4d shifted = reg.matrix(GroupElement(c4, k)) * x;
    auto f = fourier_c4(x);
    auto fs = fourier_c4(shifted);
    EXPECT_NEAR(fs.type0, f.type0, 1e-12);
    Eigen::Vector2d want = rotation2d(M_PI_2 * k) * f.type1;
    EXPECT_LT((fs.type1 - want).norm(), 1e-12);
  }
}

TEST(ActOnField, IdentityIsBitwise) {
  Rng rng(3);
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::trivial(), RepBlock::regular()});
  std::vector<double> v(5 * 6 * 6);
  for (auto& x : v) x = rng.normal();
  auto t = Tensor<double>::from_values({5, 6, 6}, v);
  auto out = act_on_grid2d(GroupElement(c4, 0), t, spec);
  for (int64_t i = 0; i < t.numel(); ++i) EXPECT_EQ(out.data()[i], t.data()[i]);
}

TEST(ActOnField, ImpulseMapsPerIndexRule) {
  CyclicGroup c4(4);
  auto spec = RepresentationSpec::trivials(c4, 1);
  std::vector<double> v(16, 0.0);
  v[0] = 1.0;  // (i,j) = (0,0)
  auto t = Tensor<double>::from_values({1, 4, 4}, v);
  auto out = act_on_grid2d(GroupElement(c4, 1), t, spec);
  // brute-force index map: (i,j) -> (j, E-1-i), so (0,0) -> (0,3)
  EXPECT_EQ(out.data()[0 * 4 + 3], 1.0);
  double sum = 0;
  for (int64_t i = 0; i < out.numel(); ++i) sum += out.data()[i];
  EXPECT_EQ(sum, 1.0);
}

TEST(ActOnField, RegularConstantFieldShiftsChannels) {
  CyclicGroup c4(4);
  auto spec = RepresentationSpec::regulars(c4, 1);
  std::vector<double> v(4 * 4 * 4);
  for (int c = 0; c < 4; ++c)
    for (int p = 0; p < 16; ++p) v[c * 16 + p] = c + 1.0;
  auto t = Tensor<double>::from_values({4, 4, 4}, v);
  auto out = act_on_grid2d(GroupElement(c4, 1), t, spec);
  // spatially constant; channels cyclically shifted by one
  for (int p = 0; p < 16; ++p) {
    EXPECT_EQ(out.data()[0 * 16 + p], 4.0);
    EXPECT_EQ(out.data()[1 * 16 + p], 1.0);
    EXPECT_EQ(out.data()[2 * 16 + p], 2.0);
    EXPECT_EQ(out.data()[3 * 16 + p], 3.0);
  }
}

TEST(ActOnField, ActionComposesExactly) {
  Rng rng(11);
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::irrep(1), RepBlock::regular(), RepBlock::trivial()});
  std::vector<double> v(spec.dim() * 8 * 8);
  for (auto& x : v) x = rng.normal();
  auto t = Tensor<double>::from_values({spec.dim(), 8, 8}, v);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      GroupElement ga(c4, a), gb(c4, b);
      auto lhs = act_on_grid2d(ga, act_on_grid2d(gb, t, spec), spec);
      auto rhs = act_on_grid2d(compose(ga, gb), t, spec);
      for (int64_t i = 0; i < t.numel(); ++i) EXPECT_EQ(lhs.data()[i], rhs.data()[i]);
    }
}

TEST(ActOnField, NonSquareThrowsGeometry) {
  CyclicGroup c4(4);
  auto spec = RepresentationSpec::trivials(c4, 1);
  auto t = Tensor<double>::zeros({1, 4, 6});
  try {
    act_on_grid2d(GroupElement(c4, 1), t, spec);
    FAIL() << "expected geometry error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGeometry);
  }
}

TEST(ActOnField, Volume3dRotatesXYOnly) {
  Rng rng(5);
  CyclicGroup c4(4);
  auto spec = RepresentationSpec::trivials(c4, 1);
  std::vector<double> v(3 * 4 * 4, 0.0);
  v[(0 * 4 + 0) * 4 + 0] = 1.0;  // z=0, (i,j)=(0,0)
  v[(2 * 4 + 1) * 4 + 2] = 5.0;  // z=2, (i,j)=(1,2)
  auto t = Tensor<double>::from_values({1, 3, 4, 4}, v);
  auto out = act_on_grid3d(GroupElement(c4, 1), t, spec);
  EXPECT_EQ(out.data()[(0 * 4 + 0) * 4 + 3], 1.0);  // (0,0) -> (0,3), z fixed
  EXPECT_EQ(out.data()[(2 * 4 + 2) * 4 + 2], 5.0);  // (1,2) -> (2,2), z fixed
}
