// Training loop and synthetic declutter evaluation.
#pragma once

#include <fstream>
#include <iostream>

#include "c4g/audit.hpp"
#include "c4g/model.hpp"
#include "c4g/optim.hpp"

namespace c4g {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_graspness = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<double> step_losses;
};

// JSON-lines training log; one object per optimizer step plus one per epoch.
template <typename T>
class Trainer {
 public:
  Trainer(GraspModel<T>& model, std::ostream* log = nullptr) : model_(model), log_(log) {
    AdamConfig cfg;
    const auto& t = model.config().train;
    cfg.learning_rate = t.learning_rate;
    cfg.decay_epochs = t.decay_epochs;
    cfg.decay_factor = t.decay_factor;
    optimizer_ = Adam<T>(cfg);
  }

  // Overfit smoke mode: repeats the first scene for `steps` optimizer steps.
  // Returns the graspness cross-entropy trace.
  std::vector<double> overfit(const SceneRecord& scene, int steps) {
    Rng rng(model_.config().train.seed);
    std::vector<double> graspness_trace;
    for (int step = 1; step <= steps; ++step) {
      optimizer_.zero_grad(model_.parameters());
      Rng step_rng = Rng::with_stream(model_.config().train.seed, step);
      auto [loss, terms] = model_.scene_losses(scene, step_rng);
      check_finite(terms, step);
      loss.backward();
      optimizer_.step(model_.parameters(), 1);
      graspness_trace.push_back(terms.graspness);
      log_step(step, 1, terms, optimizer_.config().lr_at_epoch(1));
    }
    (void)rng;
    return graspness_trace;
  }

  TrainResult train(const std::vector<SceneRecord>& scenes,
                    const std::filesystem::path& out_dir) {
    const auto& tcfg = model_.config().train;
    std::filesystem::create_directories(out_dir);
    const int n_val = std::max(1, static_cast<int>(scenes.size() * tcfg.validation_fraction));
    C4G_CHECK(static_cast<int>(scenes.size()) > n_val, ErrorKind::kData,
              "dataset too small for the validation split");
    const int n_train = static_cast<int>(scenes.size()) - n_val;

    TrainResult result;
    double best_val = 1e300;
    int64_t global_step = 0;
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
      Rng order_rng = Rng::with_stream(tcfg.seed, 1000 + epoch);
      std::vector<int> order(n_train);
      for (int i = 0; i < n_train; ++i) order[i] = i;
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[order_rng.uniform_index(i)]);

      double epoch_loss = 0;
      int batches = 0;
      for (int begin = 0; begin < n_train; begin += tcfg.batch_size) {
        optimizer_.zero_grad(model_.parameters());
        Tensor<T> batch_loss;
        LossTerms sum_terms;
        int count = 0;
        for (int i = begin; i < std::min(n_train, begin + tcfg.batch_size); ++i, ++count) {
          Rng sample_rng = Rng::with_stream(tcfg.seed, ++global_step);
          LossTerms terms;
          Tensor<T> loss;
          try {
            std::tie(loss, terms) = model_.scene_losses(scenes[order[i]], sample_rng);
          } catch (const Error& e) {
            if (e.kind() == ErrorKind::kNumeric) dump_bad_batch(out_dir, order[i], terms);
            throw;
          }
          if (!terms.finite()) {
            dump_bad_batch(out_dir, order[i], terms);
            C4G_CHECK(false, ErrorKind::kNumeric,
                      "non-finite loss on scene " << order[i] << "; diagnostic dump written");
          }
          accumulate(sum_terms, terms);
          batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        auto scaled = scale(batch_loss, T(1) / static_cast<T>(count));
        scaled.backward();
        optimizer_.step(model_.parameters(), epoch);
        scale_terms(sum_terms, 1.0 / count);
        epoch_loss += sum_terms.total;
        ++batches;
        result.step_losses.push_back(sum_terms.total);
        log_step(global_step, epoch, sum_terms, optimizer_.config().lr_at_epoch(epoch));
      }

      EpochStats stats;
      stats.epoch = epoch;
      stats.train_loss = epoch_loss / std::max(1, batches);
      stats.lr = optimizer_.config().lr_at_epoch(epoch);
      validation(scenes, n_train, stats);
      result.epochs.push_back(stats);
      log_epoch(stats);

      auto ckpt_path = out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt");
      save(ckpt_path);
      result.last_checkpoint = ckpt_path;
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        save(out_dir / "best.ckpt");
        result.best_checkpoint = out_dir / "best.ckpt";
      }
    }
    return result;
  }

  void save(const std::filesystem::path& path) const {
    auto json = model_.config().to_json();
    write_checkpoint(path,
                     make_checkpoint<T>(json, model_.config().digest(), model_.parameters()));
  }

 private:
  void validation(const std::vector<SceneRecord>& scenes, int n_train, EpochStats& stats) {
    double total = 0, graspness = 0;
    int count = 0;
    for (size_t i = n_train; i < scenes.size(); ++i, ++count) {
      Rng rng = Rng::with_stream(model_.config().train.seed, 500000 + i);
      NoGradGuard no_grad;
      auto [loss, terms] = model_.scene_losses(scenes[i], rng);
      (void)loss;
      total += terms.total;
      graspness += terms.graspness;
    }
    stats.val_loss = total / std::max(1, count);
    stats.val_graspness = graspness / std::max(1, count);
  }

  static void accumulate(LossTerms& acc, const LossTerms& t) {
    acc.total += t.total;
    acc.rotation += t.rotation;
    acc.graspness += t.graspness;
    acc.occupancy += t.occupancy;
    acc.flow += t.flow;
    acc.grasp += t.grasp;
  }

  static void scale_terms(LossTerms& t, double s) {
    t.total *= s;
    t.rotation *= s;
    t.graspness *= s;
    t.occupancy *= s;
    t.flow *= s;
    t.grasp *= s;
  }

  void check_finite(const LossTerms& terms, int step) {
    C4G_CHECK(terms.finite(), ErrorKind::kNumeric,
              "non-finite loss at step " << step << "; aborting");
  }

  // Writes the offending-batch diagnostic; the caller aborts or rethrows.
  void dump_bad_batch(const std::filesystem::path& out_dir, int scene_index,
                      const LossTerms& terms) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir / "nan_batch_dump.json", std::ios::trunc);
    os << "{\"scene_index\": " << scene_index << ", \"total\": " << terms.total
       << ", \"graspness\": " << terms.graspness << ", \"occupancy\": " << terms.occupancy
       << ", \"rotation\": " << terms.rotation << ", \"flow\": " << terms.flow
       << ", \"grasp\": " << terms.grasp << "}\n";
  }

  void log_step(int64_t step, int epoch, const LossTerms& t, double lr) {
    if (!log_) return;
    *log_ << "{\"step\":" << step << ",\"epoch\":" << epoch << ",\"loss\":" << t.total
          << ",\"loss_rot\":" << t.rotation << ",\"loss_graspness\":" << t.graspness
          << ",\"loss_occ\":" << t.occupancy << ",\"loss_flow\":" << t.flow
          << ",\"loss_grasp\":" << t.grasp << ",\"lr\":" << lr << "}\n";
  }

  void log_epoch(const EpochStats& s) {
    if (!log_) return;
    *log_ << "{\"epoch\":" << s.epoch << ",\"train_loss\":" << s.train_loss
          << ",\"val_loss\":" << s.val_loss << ",\"val_graspness\":" << s.val_graspness
          << ",\"lr\":" << s.lr << "}\n";
    log_->flush();
  }

  GraspModel<T>& model_;
  Adam<T> optimizer_;
  std::ostream* log_;
};

template <typename T>
std::vector<SceneRecord> load_scene_records(const DatasetIndex& index, int limit = -1) {
  std::vector<SceneRecord> records;
  int count = limit < 0 ? index.scene_count : std::min(limit, index.scene_count);
  records.reserve(count);
  for (int i = 0; i < count; ++i) records.push_back(read_scene_file(index.files[i]));
  return records;
}

// ---- synthetic declutter evaluation ----

struct EvalAttempt {
  int scene = 0;
  int step = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double quality = 0;
  bool success = false;
  bool no_grasp = false;
};

struct EvalResult {
  double gsr_mean = 0, gsr_std = 0;
  double dr_mean = 0, dr_std = 0;
  int scenes = 0;
  int total_attempts = 0;
  int total_successes = 0;
  std::vector<EvalAttempt> attempts;  // per-grasp log for cross-checking
};

// Repeatedly plans the top grasp, tests it against the analytic criterion,
// removes the grasped primitive on success and recomputes the TSDF; a scene
// run ends when cleared, after two consecutive failures, or on no-grasp.
template <typename T>
EvalResult evaluate_model(const GraspModel<T>& model, const std::vector<SceneRecord>& records,
                          int seeds = 3) {
  EvalResult result;
  std::vector<double> gsr_per_seed, dr_per_seed;
  const auto& gripper = model.config().gripper;
  const int grid = model.config().encoder.grid_size;

  for (int seed = 0; seed < seeds; ++seed) {
    int attempts = 0, successes = 0, removed = 0, objects = 0;
    for (size_t si = 0; si < records.size(); ++si) {
      SceneSpec scene = records[si].scene;
      objects += static_cast<int>(scene.primitives.size());
      int consecutive_failures = 0;
      int step = 0;
      Rng rng = Rng::with_stream(0xe7a1u + seed, si);
      while (!scene.primitives.empty() && consecutive_failures < 2) {
        auto tsdf = tsdf_from_scene(scene, grid);
        auto inference = model.infer(tsdf, rng);
        EvalAttempt attempt;
        attempt.scene = static_cast<int>(si);
        attempt.step = step++;
        if (inference.no_grasp) {
          attempt.no_grasp = true;
          result.attempts.push_back(attempt);
          break;
        }
        const auto& top = inference.selected.front();
        attempt.position = top.position;
        attempt.quality = top.quality;
        auto hit = grasp_succeeds(scene, gripper, top.position, rot6d_to_matrix(top.rotation));
        ++attempts;
        if (hit) {
          ++successes;
          ++removed;
          consecutive_failures = 0;
          scene.primitives.erase(scene.primitives.begin() + *hit);
          attempt.success = true;
        } else {
          ++consecutive_failures;
        }
        result.attempts.push_back(attempt);
      }
    }
    gsr_per_seed.push_back(attempts > 0 ? 100.0 * successes / attempts : 0.0);
    dr_per_seed.push_back(objects > 0 ? 100.0 * removed / objects : 0.0);
    result.total_attempts += attempts;
    result.total_successes += successes;
  }

  auto mean_std = [](const std::vector<double>& v, double& mean, double& stdev) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    stdev = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
  };
  mean_std(gsr_per_seed, result.gsr_mean, result.gsr_std);
  mean_std(dr_per_seed, result.dr_mean, result.dr_std);
  result.scenes = static_cast<int>(records.size());
  return result;
}

}  // namespace c4g
