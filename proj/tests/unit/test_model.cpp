#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "c4g/audit.hpp"
#include "c4g/runtime.hpp"
#include "test_util.hpp"

using namespace c4g;

namespace {

RunConfig tiny_config(ModelKind kind, SideMode side = SideMode::kMixed) {
  RunConfig cfg;
  cfg.model = kind;
  cfg.encoder.grid_size = 16;
  cfg.encoder.lift_regular_blocks = 1;
  cfg.encoder.xy_regular_blocks = {1, 2};
  cfg.encoder.side_channels = {4, 8};
  cfg.encoder.side_mode = side;
  cfg.decoder.eda_offsets = 4;
  cfg.decoder.control_points = 3;
  cfg.decoder.hidden_regular = 2;
  cfg.decoder.hidden_trivial = 4;
  cfg.decoder.flow_steps = 8;
  cfg.decoder.flow_time_features = 4;
  cfg.train.grasp_samples_per_scene = 16;
  cfg.train.occupancy_samples_per_scene = 16;
  cfg.train.free_negatives_per_scene = 4;
  cfg.inference.chunk = 512;
  return cfg;
}

SceneRecord tiny_record(uint64_t seed = 5) {
  DatasetConfig dc;
  dc.grid_size = 16;
  dc.contacts_per_object = 3;
  dc.occupancy_count = 200;
  dc.seed = seed;
  dc.min_objects = 1;
  dc.max_objects = 2;
  return make_scene_record(dc, 0);
}

}  // namespace

TEST(Config, JsonRoundtripAndDigest) {
  RunConfig a = tiny_config(ModelKind::kEquiIgd, SideMode::kReflectionInvariant);
  auto text = a.to_json();
  RunConfig b = RunConfig::from_json(text);
  EXPECT_EQ(b.to_json(), text);
  EXPECT_EQ(a.digest(), b.digest());
  b.encoder.grid_size = 40;
  EXPECT_NE(a.digest(), b.digest());
}

TEST(Checkpoint, BitExactRoundtrip) {
  namespace fs = std::filesystem;
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
  GraspModel<float> model(cfg, 3);
  auto path = fs::temp_directory_path() / "c4g_test.ckpt";
  write_checkpoint(path, make_checkpoint<float>(cfg.to_json(), cfg.digest(), model.parameters()));

  auto ckpt = read_checkpoint(path);
  EXPECT_EQ(ckpt.config_digest, cfg.digest());
  GraspModel<float> other(cfg, 4);  // different init
  bool differs = false;
  for (size_t i = 0; i < model.parameters().size() && !differs; ++i)
    for (int64_t j = 0; j < model.parameters()[i].tensor.numel(); ++j)
      if (model.parameters()[i].tensor.data()[j] != other.parameters()[i].tensor.data()[j]) {
        differs = true;
        break;
      }
  EXPECT_TRUE(differs);
  restore_parameters(ckpt, other.parameters());
  for (size_t i = 0; i < model.parameters().size(); ++i)
    for (int64_t j = 0; j < model.parameters()[i].tensor.numel(); ++j)
      EXPECT_EQ(model.parameters()[i].tensor.data()[j], other.parameters()[i].tensor.data()[j]);
  fs::remove(path);
}

TEST(Checkpoint, DtypeMismatchThrows) {
  namespace fs = std::filesystem;
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
  GraspModel<float> model(cfg, 3);
  auto path = fs::temp_directory_path() / "c4g_dtype.ckpt";
  write_checkpoint(path, make_checkpoint<float>(cfg.to_json(), cfg.digest(), model.parameters()));
  GraspModel<double> dmodel(cfg, 3);
  auto ckpt = read_checkpoint(path);
  EXPECT_THROW(restore_parameters(ckpt, dmodel.parameters()), Error);
  fs::remove(path);
}

TEST(Model, SceneLossesFiniteAndComplete) {
  auto record = tiny_record();
  for (ModelKind kind : {ModelKind::kEquiGiga, ModelKind::kEquiIgd}) {
    GraspModel<float> model(tiny_config(kind), 11);
    Rng rng(3);
    auto [loss, terms] = model.scene_losses(record, rng);
    EXPECT_TRUE(terms.finite());
    EXPECT_GT(terms.graspness, 0);
    EXPECT_GT(terms.occupancy, 0);
    if (kind == ModelKind::kEquiGiga) {
      EXPECT_EQ(terms.flow, 0);
      EXPECT_EQ(terms.grasp, 0);
    } else {
      EXPECT_GT(terms.grasp, 0);
    }
    // composite accounting: total is the sum of its terms
    double sum = terms.graspness + terms.occupancy + terms.rotation + terms.flow + terms.grasp;
    EXPECT_NEAR(terms.total, sum, 1e-4);
    loss.backward();
    int with_grad = 0;
    for (auto& p : model.parameters())
      if (p.tensor.has_grad()) ++with_grad;
    EXPECT_GT(with_grad, 0);
  }
}

TEST(Model, GigaVsIgdLossAccounting) {
  // on the same batch the two composites differ exactly by
  // (L_flow + L_grasp) - L_rot
  auto record = tiny_record(7);
  auto cfg_g = tiny_config(ModelKind::kEquiGiga);
  auto cfg_i = tiny_config(ModelKind::kEquiIgd);
  GraspModel<double> giga(cfg_g, 11);
  GraspModel<double> igd(cfg_i, 11);
  Rng r1(3), r2(3);
  auto [lg, tg] = giga.scene_losses(record, r1);
  auto [li, ti] = igd.scene_losses(record, r2);
  (void)lg;
  (void)li;
  EXPECT_NEAR(tg.total - tg.rotation, tg.graspness + tg.occupancy, 1e-9);
  EXPECT_NEAR(ti.total - ti.flow - ti.grasp, ti.graspness + ti.occupancy, 1e-9);
}

TEST(Model, InferEmptySceneReportsNoGrasp) {
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
  GraspModel<float> model(cfg, 13);
  SceneSpec empty;
  auto tsdf = tsdf_from_scene(empty, cfg.encoder.grid_size);
  Rng rng(5);
  auto result = model.infer(tsdf, rng);
  // untrained graspness hovers near 0.5 < threshold only if lucky; force a
  // threshold above any sigmoid output to make the contract deterministic
  EXPECT_EQ(result.grid, 16);
  EXPECT_EQ(result.graspness_grid.size(), 16u * 16 * 16);
  RunConfig strict_cfg = cfg;
  strict_cfg.inference.quality_threshold = 1.1;
  GraspModel<float> strict_model(strict_cfg, 13);
  auto r2 = strict_model.infer(tsdf, rng);
  EXPECT_TRUE(r2.no_grasp);
  EXPECT_TRUE(r2.selected.empty());
  EXPECT_GE(r2.encode_ms, 0.0);
}

TEST(Model, InferTimingAndSorting) {
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
  cfg.inference.quality_threshold = 0.0;  // accept everything
  cfg.inference.top_k = 25;
  GraspModel<float> model(cfg, 17);
  auto record = tiny_record(9);
  Rng rng(6);
  auto result = model.infer(record.tsdf, rng);
  EXPECT_FALSE(result.selected.empty());
  for (size_t i = 1; i < result.selected.size(); ++i)
    EXPECT_GE(result.selected[i - 1].quality, result.selected[i].quality);
  EXPECT_LE(result.selected.size(), 25u);
  for (const auto& g : result.selected)
    EXPECT_GE(g.quality, cfg.inference.quality_threshold);
  EXPECT_GE(result.nms_selected.size(), 1u);
  EXPECT_LE(result.nms_selected.size(), result.selected.size());
}

TEST(Audit, StrictFreshModelPasses) {
  RunConfig cfg = tiny_config(ModelKind::kEquiIgd, SideMode::kReflectionInvariant);
  GraspModel<float> model(cfg, 19);
  auto report = run_audit(model, 7);
  EXPECT_TRUE(report.strict_mode);
  EXPECT_TRUE(report.passed()) << report.to_text();
  // text and json render without throwing
  EXPECT_FALSE(report.to_text().empty());
  EXPECT_FALSE(report.to_json().empty());
}

TEST(Audit, MixedModelReportsWithoutFailing) {
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga, SideMode::kMixed);
  GraspModel<float> model(cfg, 19);
  auto report = run_audit(model, 7);
  EXPECT_FALSE(report.strict_mode);
  EXPECT_TRUE(report.passed()) << report.to_text();
  // the side-sum entry must exist, be measured, and not be asserted
  bool found = false;
  for (const auto& e : report.entries)
    if (e.component == "encoder_query.side_sum") {
      found = true;
      EXPECT_FALSE(e.asserted);
      EXPECT_GT(e.max_residual(), 0.0);
    }
  EXPECT_TRUE(found);
}

TEST(Audit, CorruptedKernelFails) {
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga, SideMode::kReflectionInvariant);
  GraspModel<float> model(cfg, 19);
  model.encoder().corrupt_for_test(0.05);
  auto report = run_audit(model, 7);
  EXPECT_FALSE(report.passed());
}

TEST(Trainer, DeterministicBitwiseRepeat) {
  auto record = tiny_record(15);
  std::vector<SceneRecord> scenes = {record, tiny_record(16), tiny_record(17)};
  auto run_once = [&]() {
    RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
    cfg.train.epochs = 2;
    GraspModel<float> model(cfg, 21);
    Trainer<float> trainer(model);
    auto dir = std::filesystem::temp_directory_path() / "c4g_train_det";
    std::filesystem::remove_all(dir);
    trainer.train(scenes, dir);
    std::vector<float> flat;
    for (auto& p : model.parameters())
      flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
    std::filesystem::remove_all(dir);
    return flat;
  };
  auto a = run_once();
  auto b = run_once();
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "param value " << i;
}

TEST(Trainer, LogScheduleShowsDecaySteps) {
  auto scenes = std::vector<SceneRecord>{tiny_record(18), tiny_record(19), tiny_record(20)};
  RunConfig cfg = tiny_config(ModelKind::kEquiGiga);
  cfg.train.epochs = 12;
  cfg.train.grasp_samples_per_scene = 4;
  cfg.train.occupancy_samples_per_scene = 4;
  cfg.train.free_negatives_per_scene = 2;
  GraspModel<float> model(cfg, 23);
  std::ostringstream log;
  Trainer<float> trainer(model, &log);
  auto dir = std::filesystem::temp_directory_path() / "c4g_train_sched";
  std::filesystem::remove_all(dir);
  auto result = trainer.train(scenes, dir);
  std::filesystem::remove_all(dir);
  ASSERT_EQ(result.epochs.size(), 12u);
  EXPECT_DOUBLE_EQ(result.epochs[7].lr, 2e-4);   // epoch 8
  EXPECT_DOUBLE_EQ(result.epochs[8].lr, 2e-5);   // epoch 9
  EXPECT_DOUBLE_EQ(result.epochs[10].lr, 2e-6);  // epoch 11
  // log is one JSON object per line
  std::istringstream lines(log.str());
  std::string line;
  int parsed = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.front(), '{');
    EXPECT_EQ(line.back(), '}');
    ++parsed;
  }
  EXPECT_GT(parsed, 12);
}

TEST(Eval, PerfectOracleAndAlwaysFailBounds) {
  // perfect-oracle policy: reads labels directly -> GSR 100%; always-fail
  // policy terminates after two failures per scene. Exercised through the
  // same declutter loop logic the evaluator uses.
  auto record = tiny_record(25);
  GripperModel gripper;
  SceneSpec scene = record.scene;
  int attempts = 0, successes = 0;
  int consecutive = 0;
  while (!scene.primitives.empty() && consecutive < 2) {
    // oracle: pick the first successful label for a remaining primitive
    const GraspLabel* pick = nullptr;
    auto labels = analytic_grasp_labels(scene, gripper, 6, 99);
    for (const auto& g : labels)
      if (g.success) {
        pick = &g;
        break;
      }
    if (!pick) break;
    auto hit = grasp_succeeds(scene, gripper, pick->position, quat_to_matrix(pick->rotation));
    ++attempts;
    if (hit) {
      ++successes;
      consecutive = 0;
      scene.primitives.erase(scene.primitives.begin() + *hit);
    } else {
      ++consecutive;
    }
  }
  if (attempts > 0) EXPECT_GE(static_cast<double>(successes) / attempts, 0.99);

  // always-fail: a grasp far outside any object
  SceneSpec scene2 = record.scene;
  int fails = 0;
  while (!scene2.primitives.empty() && fails < 2) {
    auto hit = grasp_succeeds(scene2, gripper, {0.29, 0.29, 0.29}, Eigen::Matrix3d::Identity());
    EXPECT_FALSE(hit.has_value());
    ++fails;
  }
  EXPECT_EQ(fails, 2);
}
