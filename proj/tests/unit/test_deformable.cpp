#include <gtest/gtest.h>

#include <set>

#include "c4g/deformable.hpp"
#include "equivariance_util.hpp"
#include "test_util.hpp"

using namespace c4g;
using c4g::test::equivariance_residual_2d;
using c4g::test::random_tensor;

TEST(FigureTable, ParameterCounts) {
  CyclicGroup c4(4), c8(8);
  EXPECT_EQ(figure_assignment(3, c4).num_params, 2);
  EXPECT_EQ(figure_assignment(5, c4).num_params, 5);
  EXPECT_EQ(figure_assignment(7, c4).num_params, 9);
  EXPECT_EQ(figure_assignment(5, c8).num_params, 2);
}

TEST(FigureTable, ThreeByThreeAssignment) {
  auto t = figure_assignment(3, CyclicGroup(4));
  // offsets (+-1,0),(0,+-1) -> s1 (index 0); (+-1,+-1) -> s2 (index 1); center none
  for (size_t i = 0; i < t.offsets.size(); ++i) {
    int di = static_cast<int>(t.offsets[i][0]), dj = static_cast<int>(t.offsets[i][1]);
    if (di == 0 && dj == 0) {
      EXPECT_EQ(t.param_index[i], -1);
    } else if (di == 0 || dj == 0) {
      EXPECT_EQ(t.param_index[i], 0) << di << "," << dj;
    } else {
      EXPECT_EQ(t.param_index[i], 1) << di << "," << dj;
    }
  }
}

TEST(FigureTable, PartitionClosedUnderRotation) {
  // Every non-center offset appears exactly once, and each figure is closed
  // under the group's rotation action on offsets.
  for (int size : {3, 5, 7}) {
    auto t = figure_assignment(size, CyclicGroup(4));
    std::set<std::pair<int, int>> seen;
    for (size_t i = 0; i < t.offsets.size(); ++i) {
      std::pair<int, int> o{static_cast<int>(t.offsets[i][0]), static_cast<int>(t.offsets[i][1])};
      EXPECT_TRUE(seen.insert(o).second);
      if (t.param_index[i] < 0) continue;
      // rotate (di,dj) -> (dj,-di) and look up its figure
      std::pair<int, int> r{o.second, -o.first};
      bool found = false;
      for (size_t j = 0; j < t.offsets.size(); ++j)
        if (static_cast<int>(t.offsets[j][0]) == r.first &&
            static_cast<int>(t.offsets[j][1]) == r.second) {
          EXPECT_EQ(t.param_index[j], t.param_index[i]);
          found = true;
        }
      EXPECT_TRUE(found);
    }
    EXPECT_EQ(static_cast<int>(seen.size()), size * size);
  }
}

TEST(FigureTable, SevenBySevenOrbitEnumeration) {
  // Cross-check m(m+3)/2 for m=3 by enumerating the distinct figures of the
  // 7x7 offset set directly.
  std::set<std::pair<int, int>> figures;
  for (int di = -3; di <= 3; ++di)
    for (int dj = -3; dj <= 3; ++dj) {
      if (di == 0 && dj == 0) continue;
      figures.insert({std::max(std::abs(di), std::abs(dj)), std::min(std::abs(di), std::abs(dj))});
    }
  EXPECT_EQ(figures.size(), 9u);
}

TEST(FigureTable, UnsupportedGroupThrowsConfig) {
  try {
    figure_assignment(2, CyclicGroup(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(DeformableConv, ZeroOffsetsEqualsPlainConv) {
  Rng rng(21);
  auto x = random_tensor<float>({3, 8, 8}, rng);
  auto k = random_tensor<float>({4, 3, 3, 3}, rng);
  auto offsets = Tensor<float>::zeros({18, 8, 8});
  auto plain = conv2d(x, k, 1, 1);
  auto def = deformable_conv2d(x, k, offsets);
  EXPECT_LT(c4g::test::max_abs_diff(def, plain), 2e-6);
}

TEST(DeformableConv, IntegerShiftEquivalence) {
  // all taps shifted by (0,1) reads the input shifted by (0,-1)
  Rng rng(22);
  auto x = random_tensor<double>({2, 8, 8}, rng);
  auto k = random_tensor<double>({2, 2, 3, 3}, rng);
  std::vector<double> off(18 * 64, 0.0);
  for (int t = 0; t < 9; ++t)
    for (int p = 0; p < 64; ++p) off[(2 * t + 1) * 64 + p] = 1.0;  // dj = +1
  auto offsets = Tensor<double>::from_values({18, 8, 8}, off);
  // reference: shift x by (0,-1) with zero fill, then plain conv
  std::vector<double> xs(x.numel(), 0.0);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 7; ++j) xs[(c * 8 + i) * 8 + j] = x.data()[(c * 8 + i) * 8 + j + 1];
  auto shifted = Tensor<double>::from_values(x.shape(), xs);
  auto def = deformable_conv2d(x, k, offsets);
  auto ref = conv2d(shifted, k, 1, 1);
  // interior columns agree exactly; at j=0 the shifted-input conv reads its
  // zero padding where the deformable taps still see true values
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 1; j < 7; ++j)
        EXPECT_NEAR(def.data()[(c * 8 + i) * 8 + j], ref.data()[(c * 8 + i) * 8 + j], 1e-12);
}

TEST(DeformableConv, FractionalOffsetOnLinearRamp) {
  // bilinear is exact on affine fields: tap at (0, j+0.5) reads the midpoint
  std::vector<double> v(8 * 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) v[i * 8 + j] = 3.0 * j + 1.0;
  auto x = Tensor<double>::from_values({1, 8, 8}, v);
  auto k = Tensor<double>::from_values({1, 1, 1, 1}, {1.0});
  std::vector<double> off(2 * 64, 0.0);
  for (int p = 0; p < 64; ++p) off[64 + p] = 0.5;  // dj = +0.5
  auto def = deformable_conv2d(x, k, Tensor<double>::from_values({2, 8, 8}, off));
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 7; ++j)
      EXPECT_NEAR(def.data()[i * 8 + j], 3.0 * (j + 0.5) + 1.0, 1e-12);
}

TEST(Dscn, DisabledFlagIsBitwisePlainConv) {
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::regulars(c4, 1);
  ParamRegistry<float> reg;
  Rng rng(23);
  DeformableSteerableConv2d<float> layer("d", spec, spec, 3, reg, rng);
  layer.set_deform_enabled(false);
  auto x = random_tensor<float>({4, 8, 8}, rng);
  auto a = layer.forward(x);
  auto b = layer.base().forward(x);
  for (int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Dscn, ZeroPredictorReducesToPlainSteerable) {
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::regular(), RepBlock::trivial()});
  ParamRegistry<double> reg;
  Rng rng(24);
  DeformableSteerableConv2d<double> layer("d", spec, spec, 3, reg, rng);
  // zero the predictor so b = 0 and softplus bias gives d = 1
  for (auto& p : reg.params())
    if (p.name.find(".pred") != std::string::npos)
      std::fill_n(p.tensor.mutable_data(), p.tensor.numel(), 0.0);
  auto x = random_tensor<double>({spec.dim(), 8, 8}, rng);
  auto od = layer.predict(x);
  EXPECT_LT(c4g::test::max_abs(od.b), 1e-12);
  for (int64_t i = 0; i < od.d.numel(); ++i) EXPECT_NEAR(od.d.data()[i], 1.0, 1e-12);
  auto def = layer.forward(x);
  auto plain = layer.base().forward(x);
  EXPECT_LT(c4g::test::max_abs_diff(def, plain), 1e-12);
}

TEST(Dscn, EquivarianceRandomParametersFloat) {
  CyclicGroup c4(4);
  RepresentationSpec in(c4, {RepBlock::regular(), RepBlock::trivial()});
  RepresentationSpec out(c4, {RepBlock::regular(), RepBlock::irrep(1)});
  ParamRegistry<float> reg;
  Rng rng(25);
  DeformableSteerableConv2d<float> layer("d", in, out, 3, reg, rng);
  // randomize biases as well
  for (auto& p : reg.params())
    for (int64_t i = 0; i < p.tensor.numel(); ++i)
      p.tensor.mutable_data()[i] = static_cast<float>(rng.normal() * 0.5);
  for (int it = 0; it < 5; ++it) {
    auto x = random_tensor<float>({in.dim(), 10, 10}, rng);
    double res = equivariance_residual_2d<float>(
        [&](const Tensor<float>& t) { return layer.forward(t); }, x, in, out);
    EXPECT_LT(res, 1e-5);
  }
}

TEST(Dscn, EquivarianceDouble) {
  CyclicGroup c4(4);
  RepresentationSpec spec(c4, {RepBlock::regular()});
  ParamRegistry<double> reg;
  Rng rng(26);
  DeformableSteerableConv2d<double> layer("d", spec, spec, 3, reg, rng);
  for (auto& p : reg.params())
    for (int64_t i = 0; i < p.tensor.numel(); ++i) p.tensor.mutable_data()[i] = rng.normal() * 0.4;
  auto x = random_tensor<double>({4, 8, 8}, rng);
  double res = equivariance_residual_2d<double>(
      [&](const Tensor<double>& t) { return layer.forward(t); }, x, spec, spec);
  EXPECT_LT(res, 1e-10);
}

TEST(Dscn, UniformDilationTwoMatchesDirectEq17) {
  // d_k = 2, b = 0: compare against a direct evaluation of the sampling
  // formula with hand-placed taps on the dilated ring.
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::trivials(c4, 1);
  ParamRegistry<double> reg;
  Rng rng(27);
  DeformableSteerableConv2d<double> layer("d", spec, spec, 3, reg, rng);
  const int e = 9;
  std::vector<double> v(e * e, 0.0);
  v[4 * e + 4] = 1.0;  // impulse at center
  auto x = Tensor<double>::from_values({1, e, e}, v);
  auto b = Tensor<double>::zeros({2, e, e});
  auto d = Tensor<double>::full({2, e, e}, 2.0);
  auto y = layer.forward_with(x, b, d);
  // direct Eq-17 oracle
  auto kernel = layer.base().kernel().materialize();
  auto table = layer.table();
  for (int pi = 0; pi < e; ++pi)
    for (int pj = 0; pj < e; ++pj) {
      double want = 0;
      for (size_t t = 0; t < table.offsets.size(); ++t) {
        double scale_k = table.param_index[t] < 0 ? 1.0 : 2.0;
        int si = pi + static_cast<int>(scale_k * table.offsets[t][0]);
        int sj = pj + static_cast<int>(scale_k * table.offsets[t][1]);
        if (si < 0 || si >= e || sj < 0 || sj >= e) continue;
        int ki = static_cast<int>(table.offsets[t][0]) + 1;
        int kj = static_cast<int>(table.offsets[t][1]) + 1;
        want += kernel.data()[ki * 3 + kj] * x.data()[si * e + sj];
      }
      EXPECT_NEAR(y.data()[pi * e + pj], want, 1e-12) << pi << "," << pj;
    }
}

TEST(Dscn, OffsetGradientsFlowAndMatchFiniteDiff) {
  CyclicGroup c4(4);
  RepresentationSpec spec = RepresentationSpec::trivials(c4, 2);
  ParamRegistry<double> reg;
  Rng rng(28);
  DeformableSteerableConv2d<double> layer("d", spec, spec, 3, reg, rng);
  auto x = random_tensor<double>({2, 6, 6}, rng);
  auto b0 = random_tensor<double>({2, 6, 6}, rng, -0.4, 0.4);
  auto d0 = random_tensor<double>({2, 6, 6}, rng, 0.6, 1.7);
  double err_b = c4g::test::finite_diff_check(b0, [&](const Tensor<double>& b) {
    auto y = layer.forward_with(x, b, d0);
    return sum_all(mul(y, y));
  });
  EXPECT_LT(err_b, 1e-5);
  double err_d = c4g::test::finite_diff_check(d0, [&](const Tensor<double>& d) {
    auto y = layer.forward_with(x, b0, d);
    return sum_all(mul(y, y));
  });
  EXPECT_LT(err_d, 1e-5);
}

TEST(Dscn, C8RingApproximateEquivariance) {
  // C8 taps are fractional, so equivariance under the grid's 90-degree
  // subaction holds only approximately; the 45-degree action cannot even be
  // expressed on the grid. Tolerance documented at 5e-2.
  CyclicGroup c8(8);
  RepresentationSpec spec(c8, {RepBlock::regular()});
  ParamRegistry<double> reg;
  Rng rng(29);
  DeformableSteerableConv2d<double> layer("d", spec, spec, 5, reg, rng);
  // check the C4 subgroup action (k in {0,2,4,6} of C8 = r^{0..3} of C4)
  auto x = random_tensor<double>({8, 12, 12}, rng, -0.3, 0.3);
  auto base = layer.forward(x);
  double worst = 0;
  for (int k4 = 0; k4 < 4; ++k4) {
    // C8 regular channels permute by two steps per 90 degrees
    GroupElement g8(c8, 2 * k4);
    Eigen::MatrixXd rho = spec.matrix(g8);
    // spatial rotation: apply the exact index map k4 times
    auto xr_vals = x.values();
    auto spatial = [&](const std::vector<double>& in, int chans) {
      std::vector<double> out(in.size());
      for (int c = 0; c < chans; ++c)
        for (int i = 0; i < 12; ++i)
          for (int j = 0; j < 12; ++j) {
            auto [ni, nj] = rotate_index_90(i, j, 12, k4);
            out[(c * 12 + ni) * 12 + nj] = in[(c * 12 + i) * 12 + j];
          }
      return out;
    };
    // rho then spatial
    std::vector<double> mixed(x.numel(), 0.0);
    for (int co = 0; co < 8; ++co)
      for (int ci = 0; ci < 8; ++ci)
        if (rho(co, ci) != 0)
          for (int p = 0; p < 144; ++p) mixed[co * 144 + p] += rho(co, ci) * xr_vals[ci * 144 + p];
    auto xg = Tensor<double>::from_values(x.shape(), spatial(mixed, 8));
    auto got = layer.forward(xg);
    std::vector<double> want_m(base.numel(), 0.0);
    for (int co = 0; co < 8; ++co)
      for (int ci = 0; ci < 8; ++ci)
        if (rho(co, ci) != 0)
          for (int p = 0; p < 144; ++p)
            want_m[co * 144 + p] += rho(co, ci) * base.data()[ci * 144 + p];
    auto want = spatial(want_m, 8);
    for (int64_t i = 0; i < base.numel(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want[i]));
  }
  EXPECT_LT(worst, 5e-2);
}
