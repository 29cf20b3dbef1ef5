// Command-line entry points: dataset generation, training, dense grid
// inference, the equivariance audit, and the synthetic declutter evaluation.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "c4g/runtime.hpp"
#include "c4g/svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 1;
  std::string dtype = "f32";
  std::string mode;   // strict|mixed, empty = config default
  std::string model;  // equigiga|equiigd, empty = config default
  bool force = false;
};

c4g::RunConfig load_run_config(const CommonOpts& opts) {
  c4g::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = c4g::RunConfig::load_file(opts.config_path);
  if (!opts.mode.empty()) {
    cfg.encoder.side_mode = opts.mode == "strict" ? c4g::SideMode::kReflectionInvariant
                                                  : c4g::SideMode::kMixed;
  }
  if (!opts.model.empty()) cfg.model = c4g::model_kind_from_string(opts.model);
  cfg.train.seed = opts.seed;
  cfg.validate();
  return cfg;
}

double parse_noise(const std::string& text) {
  if (text.empty() || text == "none") return 0.0;
  if (text.rfind("gaussian:", 0) == 0) return std::stod(text.substr(9));
  throw c4g::Error(c4g::ErrorKind::kConfig, "unknown noise spec '" + text + "'");
}

json candidate_json(const c4g::GraspCandidate& g) {
  c4g::Quaternion q = c4g::matrix_to_quat(c4g::rot6d_to_matrix(g.rotation));
  return json{{"position", {g.position[0], g.position[1], g.position[2]}},
              {"rotation_quat_wxyz", {q.w, q.x, q.y, q.z}},
              {"voxel", {g.voxel[0], g.voxel[1], g.voxel[2]}},
              {"graspness", g.graspness},
              {"classifier", g.classifier},
              {"quality", g.quality}};
}

template <typename T>
c4g::GraspModel<T> model_from_checkpoint(const fs::path& path, const CommonOpts& opts,
                                         c4g::RunConfig* out_cfg) {
  auto ckpt = c4g::read_checkpoint(path);
  c4g::RunConfig cfg = c4g::RunConfig::from_json(ckpt.config_json);
  if (!opts.config_path.empty()) {
    c4g::RunConfig requested = c4g::RunConfig::load_file(opts.config_path);
    if (requested.digest() != ckpt.config_digest && !opts.force) {
      throw c4g::Error(c4g::ErrorKind::kConfig,
                       "config digest mismatch with checkpoint (use --force to override)");
    }
    if (opts.force) cfg = requested;
  }
  c4g::GraspModel<T> model(cfg, /*init_seed=*/opts.seed);
  c4g::restore_parameters(ckpt, model.parameters());
  if (out_cfg) *out_cfg = cfg;
  return model;
}

int cmd_generate(const CommonOpts& opts, int scenes, const std::string& kind, int grid,
                 const std::string& noise, bool resume, int workers, int min_objects,
                 int max_objects) {
  c4g::DatasetConfig cfg;
  cfg.scene_count = scenes;
  cfg.kind = kind == "pile_like" ? c4g::SceneKind::kPileLike : c4g::SceneKind::kPackedLike;
  cfg.grid_size = grid;
  cfg.noise_sigma = parse_noise(noise);
  cfg.seed = opts.seed;
  cfg.min_objects = min_objects;
  cfg.max_objects = max_objects;
  int written = c4g::generate_dataset(opts.out_dir, cfg, resume, workers);
  std::cout << "generated " << written << " scene files under " << opts.out_dir << "\n";
  return 0;
}

template <typename T>
int cmd_train(const CommonOpts& opts, const std::string& data_dir, int overfit_steps) {
  auto index = c4g::read_dataset_index(data_dir);
  c4g::RunConfig cfg = load_run_config(opts);
  if (cfg.encoder.grid_size != index.grid_size) {
    throw c4g::Error(c4g::ErrorKind::kConfig,
                     "dataset grid " + std::to_string(index.grid_size) +
                         " does not match encoder grid " + std::to_string(cfg.encoder.grid_size));
  }
  fs::create_directories(opts.out_dir);
  cfg.save_file((fs::path(opts.out_dir) / "config.json").string());
  c4g::GraspModel<T> model(cfg, opts.seed);
  std::ofstream log(fs::path(opts.out_dir) / "train_log.jsonl", std::ios::trunc);
  c4g::Trainer<T> trainer(model, &log);

  if (overfit_steps > 0) {
    auto record = c4g::read_scene_file(index.files[0]);
    auto trace = trainer.overfit(record, overfit_steps);
    trainer.save(fs::path(opts.out_dir) / "overfit.ckpt");
    c4g::PlotSeries s;
    s.label = "graspness cross-entropy";
    for (size_t i = 0; i < trace.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(trace[i]);
    }
    c4g::write_line_chart(fs::path(opts.out_dir) / "loss_curve.svg", "overfit smoke", "step",
                          "loss", {s});
    std::cout << "overfit: final graspness cross-entropy " << trace.back() << "\n";
    return 0;
  }

  auto records = c4g::load_scene_records<T>(index);
  auto result = trainer.train(records, opts.out_dir);
  c4g::PlotSeries train_s{"train_loss", {}, {}}, val_s{"val_loss", {}, {}};
  for (const auto& e : result.epochs) {
    train_s.x.push_back(e.epoch);
    train_s.y.push_back(e.train_loss);
    val_s.x.push_back(e.epoch);
    val_s.y.push_back(e.val_loss);
  }
  c4g::write_line_chart(fs::path(opts.out_dir) / "loss_curve.svg", "training", "epoch", "loss",
                        {train_s, val_s});
  std::cout << "training done; best checkpoint: " << result.best_checkpoint << "\n";
  return 0;
}

template <typename T>
int cmd_infer(const CommonOpts& opts, const std::string& checkpoint, const std::string& scene_file,
              double threshold, int rounds) {
  auto ckpt = c4g::read_checkpoint(checkpoint);
  c4g::RunConfig cfg;
  {
    c4g::GraspModel<T> probe = model_from_checkpoint<T>(checkpoint, opts, &cfg);
  }
  if (threshold >= 0) cfg.inference.quality_threshold = threshold;
  if (rounds > 0) cfg.inference.rounds = rounds;
  c4g::GraspModel<T> model(cfg, opts.seed);
  c4g::restore_parameters(ckpt, model.parameters());

  auto record = c4g::read_scene_file(scene_file);
  c4g::Rng rng(opts.seed);
  auto result = model.infer(record.tsdf, rng);

  fs::create_directories(opts.out_dir);
  json j;
  j["no_grasp"] = result.no_grasp;
  j["grid"] = result.grid;
  j["timing_ms"] = {{"encode", result.encode_ms},
                    {"decode", result.decode_ms},
                    {"select", result.select_ms}};
  j["selected"] = json::array();
  for (const auto& g : result.selected) j["selected"].push_back(candidate_json(g));
  j["nms_selected"] = json::array();
  for (const auto& g : result.nms_selected) j["nms_selected"].push_back(candidate_json(g));
  std::ofstream os(fs::path(opts.out_dir) / "grasps.json", std::ios::trunc);
  os << j.dump(2) << "\n";
  std::cout << (result.no_grasp
                    ? std::string("no feasible grasp\n")
                    : "top quality " + std::to_string(result.selected[0].quality) + "\n")
            << "timing: encode " << result.encode_ms << " ms, decode " << result.decode_ms
            << " ms, select " << result.select_ms << " ms\n";
  return 0;
}

template <typename T>
int cmd_audit(const CommonOpts& opts, const std::string& checkpoint, bool inject_corruption) {
  c4g::RunConfig cfg;
  std::unique_ptr<c4g::GraspModel<T>> model;
  if (!checkpoint.empty()) {
    model = std::make_unique<c4g::GraspModel<T>>(model_from_checkpoint<T>(checkpoint, opts, &cfg));
  } else {
    cfg = load_run_config(opts);
    model = std::make_unique<c4g::GraspModel<T>>(cfg, opts.seed);
  }
  if (inject_corruption) model->encoder().corrupt_for_test();
  auto report = c4g::run_audit(*model, opts.seed);
  std::cout << report.to_text();
  fs::create_directories(opts.out_dir);
  std::ofstream os(fs::path(opts.out_dir) / "audit.json", std::ios::trunc);
  os << report.to_json() << "\n";
  return report.passed() ? 0 : 1;
}

template <typename T>
int cmd_eval(const CommonOpts& opts, const std::string& checkpoint, const std::string& data_dir,
             int eval_seeds) {
  auto model = model_from_checkpoint<T>(checkpoint, opts, nullptr);
  auto index = c4g::read_dataset_index(data_dir);
  auto records = c4g::load_scene_records<T>(index);
  auto result = c4g::evaluate_model(model, records, eval_seeds);

  fs::create_directories(opts.out_dir);
  std::ofstream attempts(fs::path(opts.out_dir) / "attempts.jsonl", std::ios::trunc);
  for (const auto& a : result.attempts) {
    attempts << json{{"scene", a.scene},
                     {"step", a.step},
                     {"position", {a.position[0], a.position[1], a.position[2]}},
                     {"quality", a.quality},
                     {"success", a.success},
                     {"no_grasp", a.no_grasp}}
                    .dump()
             << "\n";
  }
  json j;
  j["gsr_percent"] = {{"mean", result.gsr_mean}, {"std", result.gsr_std}};
  j["dr_percent"] = {{"mean", result.dr_mean}, {"std", result.dr_std}};
  j["scenes"] = result.scenes;
  j["total_attempts"] = result.total_attempts;
  j["total_successes"] = result.total_successes;
  std::ofstream os(fs::path(opts.out_dir) / "eval.json", std::ios::trunc);
  os << j.dump(2) << "\n";

  c4g::PlotSeries gsr{"GSR %", {0, 1}, {result.gsr_mean, result.gsr_mean}};
  c4g::PlotSeries dr{"DR %", {0, 1}, {result.dr_mean, result.dr_mean}};
  c4g::write_line_chart(fs::path(opts.out_dir) / "eval_metrics.svg", "declutter proxies", "",
                        "percent", {gsr, dr});
  std::cout << "GSR " << result.gsr_mean << " +- " << result.gsr_std << " %, DR " << result.dr_mean
            << " +- " << result.dr_std << " %\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"C4-equivariant tri-plane grasp models"};
  app.require_subcommand(1);
  app.fallthrough(true);  // global options may follow the subcommand

  CommonOpts opts;
  app.add_option("--config", opts.config_path, "run config JSON");
  app.add_option("--seed", opts.seed, "random seed")->capture_default_str();
  app.add_option("--dtype", opts.dtype, "f32|f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--mode", opts.mode, "side branch: strict|mixed")
      ->check(CLI::IsMember({"strict", "mixed"}));
  app.add_option("--model", opts.model, "equigiga|equiigd")
      ->check(CLI::IsMember({"equigiga", "equiigd"}));
  app.add_option("--out", opts.out_dir, "output directory")->capture_default_str();
  app.add_flag("--force", opts.force, "ignore checkpoint/config digest mismatch");

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  int scenes = 200, grid = 40, workers = 1, min_objects = 1, max_objects = 5;
  std::string kind = "packed_like", noise = "none";
  bool resume = false;
  gen->add_option("--scenes", scenes, "number of scenes")->capture_default_str();
  gen->add_option("--kind", kind, "packed_like|pile_like")
      ->check(CLI::IsMember({"packed_like", "pile_like"}));
  gen->add_option("--grid", grid, "TSDF grid size")->capture_default_str();
  gen->add_option("--noise", noise, "none|gaussian:SIGMA")->capture_default_str();
  gen->add_option("--workers", workers, "parallel workers")->capture_default_str();
  gen->add_option("--min-objects", min_objects)->capture_default_str();
  gen->add_option("--max-objects", max_objects)->capture_default_str();
  gen->add_flag("--resume", resume, "only regenerate missing scene files");

  auto* train = app.add_subcommand("train", "train a model");
  std::string data_dir;
  int overfit_steps = 0;
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--overfit-steps", overfit_steps,
                    "overfit smoke mode: steps on the first scene");

  auto* infer = app.add_subcommand("infer", "dense grid inference on one scene");
  std::string checkpoint, scene_file;
  double threshold = -1;
  int rounds = 0;
  infer->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  infer->add_option("--scene", scene_file, "scene .bin file")->required();
  infer->add_option("--threshold", threshold, "quality threshold override");
  infer->add_option("--rounds", rounds, "sampling rounds override");

  auto* audit = app.add_subcommand("audit", "equivariance audit");
  std::string audit_ckpt;
  bool inject = false;
  audit->add_option("--checkpoint", audit_ckpt, "checkpoint (default: fresh random model)");
  audit->add_flag("--inject-corruption", inject, "negative control: corrupt a kernel basis");

  auto* eval = app.add_subcommand("eval", "synthetic declutter evaluation");
  std::string eval_ckpt, eval_data;
  int eval_seeds = 3;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "test dataset directory")->required();
  eval->add_option("--seeds", eval_seeds, "evaluation seeds")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  const bool f64 = opts.dtype == "f64";

  try {
    if (gen->parsed())
      return cmd_generate(opts, scenes, kind, grid, noise, resume, workers, min_objects,
                          max_objects);
    if (train->parsed())
      return f64 ? cmd_train<double>(opts, data_dir, overfit_steps)
                 : cmd_train<float>(opts, data_dir, overfit_steps);
    if (infer->parsed())
      return f64 ? cmd_infer<double>(opts, checkpoint, scene_file, threshold, rounds)
                 : cmd_infer<float>(opts, checkpoint, scene_file, threshold, rounds);
    if (audit->parsed())
      return f64 ? cmd_audit<double>(opts, audit_ckpt, inject)
                 : cmd_audit<float>(opts, audit_ckpt, inject);
    if (eval->parsed())
      return f64 ? cmd_eval<double>(opts, eval_ckpt, eval_data, eval_seeds)
                 : cmd_eval<float>(opts, eval_ckpt, eval_data, eval_seeds);
  } catch (const c4g::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
