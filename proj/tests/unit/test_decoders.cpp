#include <gtest/gtest.h>

#include "c4g/decoders.hpp"
#include "c4g/optim.hpp"
#include "equivariance_util.hpp"
#include "test_util.hpp"

using namespace c4g;
using c4g::test::max_abs_diff;
using c4g::test::random_tensor;

namespace {

// Applies rho(g) to every row of [N, dim].
template <typename T>
Tensor<T> transform_rows(const Tensor<T>& x, const RepresentationSpec& spec,
                         const GroupElement& g) {
  Eigen::MatrixXd rho = spec.matrix(g);
  const int64_t n = x.shape()[0], d = x.shape()[1];
  std::vector<T> out(n * d, T(0));
  for (int64_t r = 0; r < n; ++r)
    for (int64_t i = 0; i < d; ++i) {
      double acc = 0;
      for (int64_t j = 0; j < d; ++j) acc += rho(i, j) * static_cast<double>(x.data()[r * d + j]);
      out[r * d + i] = static_cast<T>(acc);
    }
  return Tensor<T>::from_values(x.shape(), std::move(out));
}

RepresentationSpec small_c_spec(CyclicGroup g) {
  return RepresentationSpec(g, {RepBlock::regular(), RepBlock::regular(), RepBlock::trivial(),
                                RepBlock::trivial(), RepBlock::trivial()});
}

DecoderConfig small_decoder_config() {
  DecoderConfig cfg;
  cfg.eda_offsets = 4;
  cfg.control_points = 3;
  cfg.hidden_regular = 4;
  cfg.hidden_trivial = 4;
  cfg.flow_time_features = 4;
  return cfg;
}

}  // namespace

TEST(Orthonormalize, ProducesRotationMatrices) {
  Rng rng(51);
  auto r6 = random_tensor<double>({8, 6}, rng, -2.0, 2.0);
  auto r9 = orthonormalize_rot6d(r6);
  for (int n = 0; n < 8; ++n) {
    Eigen::Matrix3d m;
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 3; ++r) m(r, c) = r9.data()[n * 9 + c * 3 + r];
    EXPECT_LT((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(m.determinant(), 1.0, 1e-6);
  }
}

TEST(Orthonormalize, GradientFiniteDiff) {
  // well-conditioned columns (clearly non-collinear) keep the Gram-Schmidt
  // curvature moderate so central differences are meaningful
  Rng rng(52);
  std::vector<double> v;
  for (int n = 0; n < 3; ++n) {
    Eigen::Matrix3d m = quat_to_matrix(random_quaternion(rng));
    auto r6 = matrix_to_rot6d(m);
    for (double x : r6) v.push_back(1.3 * x + 0.05 * rng.normal());
  }
  auto r0 = Tensor<double>::from_values({3, 6}, v);
  double err = c4g::test::finite_diff_check(r0, [](const Tensor<double>& r) {
    auto m = orthonormalize_rot6d(r);
    auto w = Tensor<double>::from_values({1, 9}, {0.3, -0.2, 0.9, 0.1, 0.7, -0.4, 0.2, 0.5, -0.6});
    return sum_all(mul(m, mul(m, reshape(concat<double>({w, w, w}, 0), {3, 9}))));
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Orthonormalize, DegenerateThrowsNumeric) {
  auto zero = Tensor<double>::zeros({1, 6});
  try {
    orthonormalize_rot6d(zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(RotationLoss, IdenticalAndDoubleCover) {
  Eigen::Matrix3d r = quat_to_matrix(Quaternion(0.3, 0.5, -0.2, 0.4));
  auto r6v = matrix_to_rot6d(r);
  std::vector<double> pred(r6v.begin(), r6v.end());
  std::vector<double> gt(9);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i) gt[c * 3 + i] = r(i, c);
  auto loss = rotation_loss(Tensor<double>::from_values({1, 6}, pred),
                            Tensor<double>::from_values({1, 9}, gt));
  EXPECT_NEAR(loss.item(), -1.0, 1e-9);
  // q vs -q gives the same matrix, so the loss is identical by construction:
  // the trace identity is quadratic in the quaternion.
  Quaternion q = matrix_to_quat(r);
  Quaternion mq(-q.w, -q.x, -q.y, -q.z);
  EXPECT_LT((quat_to_matrix(mq) - r).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RotationLoss, NinetyDegreesApart) {
  // |<q1,q2>| = cos(45 deg) for rotations 90 degrees apart about z.
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d b = rotation_z(M_PI_2);
  auto r6v = matrix_to_rot6d(a);
  std::vector<double> pred(r6v.begin(), r6v.end());
  std::vector<double> gt(9);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i) gt[c * 3 + i] = b(i, c);
  auto loss = rotation_loss(Tensor<double>::from_values({1, 6}, pred),
                            Tensor<double>::from_values({1, 9}, gt));
  EXPECT_NEAR(loss.item(), -std::sqrt(0.5), 1e-9);
  // quaternion-form cross check
  EXPECT_NEAR(std::abs(matrix_to_quat(a).dot(matrix_to_quat(b))), std::sqrt(0.5), 1e-12);
}

TEST(GigaHeads, ZeroWeightsGiveHalfProbabilities) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<float> reg;
  Rng rng(53);
  GigaHeads<float> heads("h", c_spec, small_decoder_config(), reg, rng);
  for (auto& p : reg.params()) std::fill_n(p.tensor.mutable_data(), p.tensor.numel(), 0.f);
  auto c = random_tensor<float>({5, c_spec.dim()}, rng);
  auto a = heads.graspness(c);
  auto o = heads.occupancy(c);
  for (int64_t i = 0; i < a.numel(); ++i) {
    EXPECT_FLOAT_EQ(a.data()[i], 0.5f);
    EXPECT_FLOAT_EQ(o.data()[i], 0.5f);
  }
  // rotation head collapses to the zero vector, a flagged degenerate for
  // orthonormalization
  auto r = heads.rotation6d(c);
  EXPECT_LT(c4g::test::max_abs(r), 1e-12);
  EXPECT_THROW(orthonormalize_rot6d(r), Error);
}

TEST(GigaHeads, TypedEquivarianceAsMaps) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<double> reg;
  Rng rng(54);
  GigaHeads<double> heads("h", c_spec, small_decoder_config(), reg, rng);
  auto rspec = rotation6d_spec(c4);
  auto c = random_tensor<double>({6, c_spec.dim()}, rng);
  auto a0 = heads.graspness(c);
  auto r0 = heads.rotation6d(c);
  for (int k = 0; k < 4; ++k) {
    GroupElement g(c4, k);
    auto cg = transform_rows(c, c_spec, g);
    EXPECT_LT(max_abs_diff(heads.graspness(cg), a0), 1e-12);
    EXPECT_LT(max_abs_diff(heads.occupancy(cg), heads.occupancy(c)), 1e-12);
    auto want = transform_rows(r0, rspec, g);
    EXPECT_LT(max_abs_diff(heads.rotation6d(cg), want), 1e-12);
  }
}

TEST(RotationTyping, TypedSixDComposesToWorldRotation) {
  // The (irrep1 (+) trivial)^2 action on a 6D rotation commutes with
  // orthonormalization and equals left-multiplication by the z-rotation:
  // orthonormalize(rho(g) r) = Rz(90 k) orthonormalize(r).
  CyclicGroup c4(4);
  auto rspec = rotation6d_spec(c4);
  Rng rng(55);
  std::vector<double> v;
  for (int n = 0; n < 5; ++n) {
    auto r6 = matrix_to_rot6d(quat_to_matrix(random_quaternion(rng)));
    for (double x : r6) v.push_back(x);
  }
  auto r = Tensor<double>::from_values({5, 6}, v);
  auto r9 = orthonormalize_rot6d(r);
  for (int k = 0; k < 4; ++k) {
    GroupElement g(c4, k);
    auto r9g = orthonormalize_rot6d(transform_rows(r, rspec, g));
    Eigen::Matrix3d rz = rotation_z(M_PI_2 * k);
    for (int n = 0; n < 5; ++n) {
      Eigen::Matrix3d m, mg;
      for (int cc = 0; cc < 3; ++cc)
        for (int rr = 0; rr < 3; ++rr) {
          m(rr, cc) = r9.data()[n * 9 + cc * 3 + rr];
          mg(rr, cc) = r9g.data()[n * 9 + cc * 3 + rr];
        }
      EXPECT_LT((mg - rz * m).cwiseAbs().maxCoeff(), 1e-9) << "k=" << k;
    }
  }
}

namespace {

template <typename T>
TriplaneFeatures<T> strict_encoded(TriplaneEncoder<T>& enc, const Tensor<T>& tsdf) {
  return enc.encode(tsdf);
}

EncoderConfig strict_small() {
  EncoderConfig cfg;
  cfg.grid_size = 16;
  cfg.lift_regular_blocks = 1;
  cfg.xy_regular_blocks = {1, 2};
  cfg.side_channels = {4, 8};
  cfg.side_mode = SideMode::kReflectionInvariant;
  return cfg;
}

Eigen::Vector3d rot_world(const Eigen::Vector3d& p, int k, double ws) {
  Eigen::Vector3d c(ws / 2, ws / 2, 0);
  Eigen::Vector3d d = p - c;
  for (int s = 0; s < k; ++s) d = Eigen::Vector3d(-d[1], d[0], d[2]);
  return c + d;
}

}  // namespace

TEST(Eda, ZeroOffsetWeightsArePureChannelMixing) {
  CyclicGroup c4(4);
  ParamRegistry<float> reg;
  Rng rng(56);
  EncoderConfig ecfg = strict_small();
  TriplaneEncoder<float> enc(ecfg, reg, rng);
  auto c_spec = enc.query_spec();
  DecoderConfig dcfg = small_decoder_config();
  EquivariantDeformableAttention<float> eda("eda", c_spec, dcfg, reg, rng);
  // zero the offset predictor
  for (auto& p : reg.params())
    if (p.name.rfind("eda.off", 0) == 0)
      std::fill_n(p.tensor.mutable_data(), p.tensor.numel(), 0.f);
  auto tsdf = random_tensor<float>({1, 16, 16, 16}, rng);
  auto tri = enc.encode(tsdf);
  auto pts = random_tensor<float>({5, 3}, rng, 0.05, 0.25);
  auto c = query_features(tri, pts);
  auto delta = eda.offsets(c);
  EXPECT_LT(c4g::test::max_abs(delta), 1e-12);
  // with all offsets zero every branch queries c(p) itself
  auto got = eda.forward(tri, pts, c);
  EXPECT_EQ(got.shape(), c.shape());
}

TEST(Eda, ManualCompositionSingleOffset) {
  // K=1, identity-on-trivial h_in/h_out: c_tilde(p) = c(p + Delta_1) + c(p).
  CyclicGroup c4(4);
  auto c_spec = RepresentationSpec::trivials(c4, 3);
  DecoderConfig cfg;
  cfg.eda_offsets = 1;
  cfg.hidden_regular = 0;
  cfg.hidden_trivial = 3;
  ParamRegistry<double> reg;
  Rng rng(57);
  EquivariantDeformableAttention<double> eda("eda", c_spec, cfg, reg, rng);
  // identity weights: trivial->trivial pair bases are unit scalars in
  // (out-block, in-block) order, so the coefficient vector is the flattened
  // identity matrix
  for (auto& p : reg.params()) {
    if (p.name == "eda.in.w" || p.name == "eda.out.w") {
      for (int o = 0; o < 3; ++o)
        for (int i = 0; i < 3; ++i) p.tensor.mutable_data()[o * 3 + i] = (o == i) ? 1.0 : 0.0;
    } else if (p.name.rfind(".b") != std::string::npos) {
      std::fill_n(p.tensor.mutable_data(), p.tensor.numel(), 0.0);
    }
  }
  TriplaneFeatures<double> tri;
  tri.xy = random_tensor<double>({2, 8, 8}, rng);
  tri.xy_spec = RepresentationSpec::trivials(c4, 2);
  tri.xz = random_tensor<double>({1, 8, 8}, rng);
  tri.yz = random_tensor<double>({1, 8, 8}, rng);
  tri.geometry = GridGeometry::cube(8, 0.30);
  auto pts = random_tensor<double>({4, 3}, rng, 0.08, 0.22);
  auto c = query_features(tri, pts);
  auto delta = eda.offsets(c);  // [4,3]
  auto moved = add(pts, delta);
  auto want = add(query_features(tri, moved), c);  // A_1 = softmax over one = 1
  auto got = eda.forward(tri, pts, c);
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Eda, EndToEndEquivarianceStrictEncoder) {
  ParamRegistry<float> reg;
  Rng rng(58);
  TriplaneEncoder<float> enc(strict_small(), reg, rng);
  auto c_spec = enc.query_spec();
  EquivariantDeformableAttention<float> eda("eda", c_spec, small_decoder_config(), reg, rng);
  CyclicGroup c4(4);
  auto tsdf_spec = RepresentationSpec::trivials(c4, 1);
  auto tsdf = random_tensor<float>({1, 16, 16, 16}, rng);
  auto tri = enc.encode(tsdf);
  const int n = 10;
  Rng prng(59);
  std::vector<float> pv(n * 3);
  for (auto& v : pv) v = static_cast<float>(prng.uniform(0.05, 0.25));
  auto pts = Tensor<float>::from_values({n, 3}, pv);
  auto base = eda.forward(tri, pts, query_features(tri, pts));
  for (int k = 1; k < 4; ++k) {
    auto tri_r = enc.encode(act_on_grid3d(GroupElement(c4, k), tsdf, tsdf_spec));
    std::vector<float> rv(n * 3);
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d q = rot_world({pv[3 * i], pv[3 * i + 1], pv[3 * i + 2]}, k, 0.30);
      rv[3 * i] = q[0];
      rv[3 * i + 1] = q[1];
      rv[3 * i + 2] = q[2];
    }
    auto rpts = Tensor<float>::from_values({n, 3}, rv);
    auto got = eda.forward(tri_r, rpts, query_features(tri_r, rpts));
    auto want = transform_rows(base, c_spec, GroupElement(c4, k));
    EXPECT_LT(max_abs_diff(got, want), 1e-4) << "k=" << k;
  }
}

TEST(Flow, InterpolationEndpoints) {
  Rng rng(60);
  auto r0 = random_tensor<double>({3, 6}, rng);
  auto r1 = random_tensor<double>({3, 6}, rng);
  {
    auto [rt, u] = RotationFlow<double>::interpolate(r0, r1, {1.0, 1.0, 1.0});
    EXPECT_LT(max_abs_diff(rt, r1), 1e-12);
    EXPECT_LT(c4g::test::max_abs(u), 1e-12);
  }
  {
    auto [rt, u] = RotationFlow<double>::interpolate(r0, r1, {0.0, 0.0, 0.0});
    EXPECT_LT(max_abs_diff(rt, r0), 1e-12);
    EXPECT_LT(max_abs_diff(u, sub(r1, r0)), 1e-12);
  }
}

TEST(Flow, ZeroVelocityNetworkReturnsBaseSample) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<double> reg;
  Rng rng(61);
  RotationFlow<double> flow("f", c_spec, small_decoder_config(), reg, rng);
  for (auto& p : reg.params()) std::fill_n(p.tensor.mutable_data(), p.tensor.numel(), 0.0);
  auto c = random_tensor<double>({4, c_spec.dim()}, rng);
  Rng s1(77), s2(77);
  auto samples = flow.sample(c, 1, s1);
  // reproduce the base draw with the same stream
  std::vector<double> want(4 * 6);
  for (auto& v : want) v = s2.normal();
  for (int64_t i = 0; i < samples[0].numel(); ++i)
    EXPECT_DOUBLE_EQ(samples[0].data()[i], want[i]);
}

TEST(Flow, VelocityEquivarianceAsMap) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<double> reg;
  Rng rng(62);
  RotationFlow<double> flow("f", c_spec, small_decoder_config(), reg, rng);
  auto rspec = rotation6d_spec(c4);
  auto r = random_tensor<double>({5, 6}, rng);
  auto c = random_tensor<double>({5, c_spec.dim()}, rng);
  std::vector<double> ts = {0.1, 0.3, 0.5, 0.7, 0.9};
  auto base = flow.velocity(r, c, ts);
  for (int k = 0; k < 4; ++k) {
    GroupElement g(c4, k);
    auto got = flow.velocity(transform_rows(r, rspec, g), transform_rows(c, c_spec, g), ts);
    auto want = transform_rows(base, rspec, g);
    EXPECT_LT(max_abs_diff(got, want), 1e-12);
  }
}

TEST(Flow, SingleModeTrainingConvergesWithinFiveDegrees) {
  // Toy dataset: one conditioning vector, one target rotation. After
  // training, >=95% of samples land within 5 degrees of the mode.
  CyclicGroup c4(4);
  RepresentationSpec c_spec(c4, {RepBlock::regular(), RepBlock::trivial()});
  DecoderConfig cfg = small_decoder_config();
  ParamRegistry<double> reg;
  Rng rng(63);
  RotationFlow<double> flow("f", c_spec, cfg, reg, rng);

  Eigen::Matrix3d target = quat_to_matrix(Quaternion(0.9, 0.1, -0.3, 0.25));
  auto t6 = matrix_to_rot6d(target);
  const int batch = 16;
  std::vector<double> cv(c_spec.dim());
  for (auto& v : cv) v = rng.normal();
  std::vector<double> crows, rrows;
  for (int i = 0; i < batch; ++i) {
    crows.insert(crows.end(), cv.begin(), cv.end());
    rrows.insert(rrows.end(), t6.begin(), t6.end());
  }
  auto c = Tensor<double>::from_values({batch, c_spec.dim()}, crows);
  auto r1 = Tensor<double>::from_values({batch, 6}, rrows);

  AdamConfig acfg;
  acfg.learning_rate = 5e-3;
  acfg.decay_epochs = {};
  Adam<double> opt(acfg);
  for (int step = 0; step < 400; ++step) {
    opt.zero_grad(reg.params());
    auto loss = flow.train_loss(c, r1, rng);
    loss.backward();
    opt.step(reg.params(), 1);
  }
  Rng srng(64);
  auto samples = flow.sample(c, 4, srng);
  int total = 0, good = 0;
  for (const auto& s : samples)
    for (int i = 0; i < batch; ++i) {
      Rot6d r6;
      for (int j = 0; j < 6; ++j) r6[j] = s.data()[i * 6 + j];
      double deg = geodesic_angle(rot6d_to_matrix(r6), target) * 180.0 / M_PI;
      ++total;
      if (deg <= 5.0) ++good;
    }
  EXPECT_GE(static_cast<double>(good) / total, 0.95)
      << good << "/" << total << " within 5 degrees";
}

TEST(GraspDam, ControlPointTransformIdentityPose) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<double> reg;
  Rng rng(65);
  GraspDam<double> dam("dam", c_spec, small_decoder_config(), reg, rng);
  // identity rotation, translation p: T u = u + p
  std::vector<double> rot(9, 0.0);
  rot[0] = rot[4] = rot[8] = 1.0;  // column-major identity
  auto positions = Tensor<double>::from_values({1, 3}, {0.1, 0.2, 0.3});
  auto rot9 = Tensor<double>::from_values({1, 9}, rot);
  for (int l = 0; l < dam.num_control_points(); ++l) {
    auto w = dam.transformed_point(positions, rot9, l);
    for (int a = 0; a < 3; ++a)
      EXPECT_NEAR(w.data()[a],
                  dam.control_points().data()[l * 3 + a] + positions.data()[a], 1e-12);
  }
}

TEST(GraspDam, SingleOriginControlPointReadsQueryItself) {
  CyclicGroup c4(4);
  auto c_spec = RepresentationSpec::trivials(c4, 4);
  DecoderConfig cfg = small_decoder_config();
  cfg.control_points = 1;
  ParamRegistry<double> reg;
  Rng rng(66);
  GraspDam<double> dam("dam", c_spec, cfg, reg, rng);
  std::fill_n(dam.control_points().mutable_data(), 3, 0.0);
  TriplaneFeatures<double> tri;
  tri.xy = random_tensor<double>({2, 8, 8}, rng);
  tri.xy_spec = RepresentationSpec::trivials(c4, 2);
  tri.xz = random_tensor<double>({2, 8, 8}, rng);
  tri.yz = random_tensor<double>({2, 8, 8}, rng);
  tri.geometry = GridGeometry::cube(8, 0.30);
  auto pts = random_tensor<double>({3, 3}, rng, 0.08, 0.22);
  Rng qr(67);
  std::vector<double> rot;
  for (int i = 0; i < 3; ++i) {
    Eigen::Matrix3d m = quat_to_matrix(random_quaternion(qr));
    for (int cc = 0; cc < 3; ++cc)
      for (int rr = 0; rr < 3; ++rr) rot.push_back(m(rr, cc));
  }
  auto rot9 = Tensor<double>::from_values({3, 9}, rot);
  auto c = query_features(tri, pts);
  // with u = 0 the K/V inputs are c(p) regardless of rotation; the single
  // attention weight is softmax over one logit = 1
  auto refined = dam.refine(tri, pts, rot9, c);
  // manual composition: h_out(V(c)) + c
  // (reuse the layers by re-running refine with rotation set to identity —
  // the result must be identical since the rotation cannot enter)
  std::vector<double> idrot(3 * 9, 0.0);
  for (int i = 0; i < 3; ++i) idrot[i * 9 + 0] = idrot[i * 9 + 4] = idrot[i * 9 + 8] = 1.0;
  auto refined_id = dam.refine(tri, pts, Tensor<double>::from_values({3, 9}, idrot), c);
  EXPECT_LT(max_abs_diff(refined, refined_id), 1e-12);
}

TEST(GraspDam, JointEquivarianceStrictEncoder) {
  ParamRegistry<float> reg;
  Rng rng(68);
  TriplaneEncoder<float> enc(strict_small(), reg, rng);
  auto c_spec = enc.query_spec();
  GraspDam<float> dam("dam", c_spec, small_decoder_config(), reg, rng);
  CyclicGroup c4(4);
  auto tsdf_spec = RepresentationSpec::trivials(c4, 1);
  auto tsdf = random_tensor<float>({1, 16, 16, 16}, rng);
  auto tri = enc.encode(tsdf);
  const int n = 6;
  Rng prng(69);
  std::vector<float> pv(n * 3);
  for (auto& v : pv) v = static_cast<float>(prng.uniform(0.06, 0.24));
  auto pts = Tensor<float>::from_values({n, 3}, pv);
  std::vector<Eigen::Matrix3d> rots;
  std::vector<float> rv;
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix3d m = quat_to_matrix(random_quaternion(prng));
    rots.push_back(m);
    for (int cc = 0; cc < 3; ++cc)
      for (int rr = 0; rr < 3; ++rr) rv.push_back(static_cast<float>(m(rr, cc)));
  }
  auto rot9 = Tensor<float>::from_values({n, 9}, rv);
  auto c = query_features(tri, pts);
  auto base = dam.refine(tri, pts, rot9, c);
  auto base_v = dam.classify(base);

  for (int k = 1; k < 4; ++k) {
    auto tri_r = enc.encode(act_on_grid3d(GroupElement(c4, k), tsdf, tsdf_spec));
    Eigen::Matrix3d rz = rotation_z(M_PI_2 * k);
    std::vector<float> pv_r(n * 3), rv_r;
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d q = rot_world({pv[3 * i], pv[3 * i + 1], pv[3 * i + 2]}, k, 0.30);
      pv_r[3 * i] = q[0];
      pv_r[3 * i + 1] = q[1];
      pv_r[3 * i + 2] = q[2];
      Eigen::Matrix3d mr = rz * rots[i];
      for (int cc = 0; cc < 3; ++cc)
        for (int rr = 0; rr < 3; ++rr) rv_r.push_back(static_cast<float>(mr(rr, cc)));
    }
    auto pts_r = Tensor<float>::from_values({n, 3}, pv_r);
    auto rot9_r = Tensor<float>::from_values({n, 9}, rv_r);
    auto c_r = query_features(tri_r, pts_r);
    auto got = dam.refine(tri_r, pts_r, rot9_r, c_r);
    auto want = transform_rows(base, c_spec, GroupElement(c4, k));
    EXPECT_LT(max_abs_diff(got, want), 1e-4) << "k=" << k;
    // classifier score invariant under the joint transformation
    auto got_v = dam.classify(got);
    EXPECT_LT(max_abs_diff(got_v, base_v), 1e-4) << "k=" << k;
  }
}

TEST(Flow, RoundsAreIndependentDraws) {
  CyclicGroup c4(4);
  auto c_spec = small_c_spec(c4);
  ParamRegistry<double> reg;
  Rng rng(91);
  RotationFlow<double> flow("f", c_spec, small_decoder_config(), reg, rng);
  auto c = random_tensor<double>({3, c_spec.dim()}, rng);
  Rng srng(92);
  auto samples = flow.sample(c, 3, srng);
  ASSERT_EQ(samples.size(), 3u);
  // distinct base draws give distinct outputs
  for (size_t a = 0; a < samples.size(); ++a)
    for (size_t b = a + 1; b < samples.size(); ++b)
      EXPECT_GT(c4g::test::max_abs_diff(samples[a], samples[b]), 1e-3);
}
