// Full grasp models: the tri-plane encoder plus the decoding heads, the
// composite training losses, and dense grid inference.
//
//   EquiGIGA: direct regression; L = L_rot + L_graspness + L_occ.
//   EquiIGD:  EDA-refined features, rotation flow sampling and the grasp
//             classifier; L = L_flow + L_graspness + L_grasp + L_occ.
#pragma once

#include <chrono>

#include "c4g/checkpoint.hpp"
#include "c4g/config.hpp"
#include "c4g/dataset.hpp"
#include "c4g/decoders.hpp"

namespace c4g {

struct LossTerms {
  double total = 0;
  double rotation = 0;
  double graspness = 0;
  double occupancy = 0;
  double flow = 0;
  double grasp = 0;

  bool finite() const {
    return std::isfinite(total) && std::isfinite(rotation) && std::isfinite(graspness) &&
           std::isfinite(occupancy) && std::isfinite(flow) && std::isfinite(grasp);
  }
};

struct GraspCandidate {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Rot6d rotation{1, 0, 0, 0, 1, 0};
  double graspness = 0;
  double classifier = 1;
  double quality = 0;
  int voxel[3] = {0, 0, 0};  // (x, y, z) indices
};

struct InferenceResult {
  int grid = 0;
  std::vector<float> graspness_grid;  // [z][y][x]
  std::vector<float> quality_grid;
  std::vector<GraspCandidate> selected;      // above threshold, quality-descending
  std::vector<GraspCandidate> nms_selected;  // reporting-only suppression
  bool no_grasp = false;
  double encode_ms = 0, decode_ms = 0, select_ms = 0;
};

template <typename T>
class GraspModel {
 public:
  GraspModel() = default;

  explicit GraspModel(const RunConfig& config, uint64_t init_seed = 7) : config_(config) {
    config_.validate();
    Rng rng(init_seed);
    encoder_ = TriplaneEncoder<T>(config_.encoder, registry_, rng);
    auto c_spec = encoder_.query_spec();
    heads_ = GigaHeads<T>("giga", c_spec, config_.decoder, registry_, rng);
    if (config_.model == ModelKind::kEquiIgd) {
      eda_ = EquivariantDeformableAttention<T>("eda", c_spec, config_.decoder, registry_, rng);
      flow_ = RotationFlow<T>("flow", c_spec, config_.decoder, registry_, rng);
      dam_ = GraspDam<T>("dam", c_spec, config_.decoder, registry_, rng);
    }
  }

  const RunConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return registry_.params(); }
  const std::vector<Parameter<T>>& parameters() const { return registry_.params(); }
  const TriplaneEncoder<T>& encoder() const { return encoder_; }
  TriplaneEncoder<T>& encoder() { return encoder_; }
  const GigaHeads<T>& heads() const { return heads_; }
  const EquivariantDeformableAttention<T>& eda() const { return eda_; }
  const RotationFlow<T>& flow() const { return flow_; }
  const GraspDam<T>& dam() const { return dam_; }

  Tensor<T> tsdf_tensor(const TsdfVolume& tsdf) const {
    C4G_CHECK(tsdf.grid == config_.encoder.grid_size, ErrorKind::kConfig,
              "TSDF grid " << tsdf.grid << " does not match model grid "
                           << config_.encoder.grid_size);
    std::vector<T> v(tsdf.values.begin(), tsdf.values.end());
    const int64_t s = tsdf.grid;
    return Tensor<T>::from_values({1, s, s, s}, std::move(v));
  }

  // Training losses for one scene; the backward pass is the caller's.
  // Differentiable total plus detached per-term values for logging.
  std::pair<Tensor<T>, LossTerms> scene_losses(const SceneRecord& record, Rng& rng) const {
    auto tri = encoder_.encode(tsdf_tensor(record.tsdf));

    // --- assemble grasp rows: labeled candidates + far free-space negatives
    std::vector<const GraspLabel*> picks;
    pick_labels(record, rng, picks);
    const int n_lab = static_cast<int>(picks.size());
    const int n_free = config_.train.free_negatives_per_scene;
    std::vector<T> pos;
    std::vector<T> target;
    for (const auto* g : picks) {
      for (int a = 0; a < 3; ++a) pos.push_back(static_cast<T>(g->position[a]));
      target.push_back(static_cast<T>(g->success));
    }
    const double cell = record.tsdf.cell();
    for (int i = 0; i < n_free; ++i) {
      Eigen::Vector3d p = far_free_point(record.scene, rng, 2.0 * cell);
      for (int a = 0; a < 3; ++a) pos.push_back(static_cast<T>(p[a]));
      target.push_back(T(0));
    }
    const int n_rows = n_lab + n_free;
    auto points = Tensor<T>::from_values({n_rows, 3}, std::move(pos));
    auto grasp_target = Tensor<T>::from_values({n_rows}, std::move(target));

    auto c = query_features(tri, points);
    Tensor<T> c_used = c;
    if (config_.model == ModelKind::kEquiIgd) c_used = eda_.forward(tri, points, c);

    LossTerms terms;
    auto a_pred = reshape(heads_.graspness(c_used), {n_rows});
    auto loss = binary_cross_entropy(a_pred, grasp_target);
    terms.graspness = static_cast<double>(loss.item());

    // --- occupancy
    {
      std::vector<T> opos;
      std::vector<T> olab;
      int n_occ = std::min<int>(config_.train.occupancy_samples_per_scene,
                                static_cast<int>(record.occupancy.size()));
      for (int i = 0; i < n_occ; ++i) {
        const auto& s = record.occupancy[rng.uniform_index(record.occupancy.size())];
        for (int a = 0; a < 3; ++a) opos.push_back(static_cast<T>(s.point[a]));
        olab.push_back(static_cast<T>(s.occupied));
      }
      if (n_occ > 0) {
        auto opoints = Tensor<T>::from_values({n_occ, 3}, std::move(opos));
        auto olabels = Tensor<T>::from_values({n_occ}, std::move(olab));
        auto o_pred = reshape(heads_.occupancy(query_features(tri, opoints)), {n_occ});
        auto locc = binary_cross_entropy(o_pred, olabels);
        terms.occupancy = static_cast<double>(locc.item());
        loss = add(loss, locc);
      }
    }

    // --- rotation supervision on the positive rows
    std::vector<int> positive_rows;
    for (int i = 0; i < n_lab; ++i)
      if (picks[i]->success) positive_rows.push_back(i);
    if (!positive_rows.empty()) {
      auto c_pos = gather_rows(c_used, positive_rows);
      std::vector<T> gt;
      std::vector<T> gt6;
      for (int i : positive_rows) {
        Eigen::Matrix3d m = quat_to_matrix(picks[i]->rotation);
        for (int col = 0; col < 3; ++col)
          for (int row = 0; row < 3; ++row) gt.push_back(static_cast<T>(m(row, col)));
        auto r6 = matrix_to_rot6d(m);
        for (double v : r6) gt6.push_back(static_cast<T>(v));
      }
      const int np = static_cast<int>(positive_rows.size());
      if (config_.model == ModelKind::kEquiGiga) {
        auto pred6 = heads_.rotation6d(c_pos);
        // rows whose features carry no orientation (saturated-TSDF regions
        // give exactly invariant features) are excluded from the loss
        std::vector<int> good;
        for (int i = 0; i < np; ++i)
          if (rot6d_well_conditioned(pred6.data() + 6 * i)) good.push_back(i);
        if (!good.empty()) {
          std::vector<T> gt_sel;
          for (int i : good)
            gt_sel.insert(gt_sel.end(), gt.begin() + 9 * i, gt.begin() + 9 * (i + 1));
          auto gt_mats =
              Tensor<T>::from_values({static_cast<int64_t>(good.size()), 9}, std::move(gt_sel));
          auto lrot = rotation_loss(gather_rows(pred6, good), gt_mats);
          terms.rotation = static_cast<double>(lrot.item());
          loss = add(loss, lrot);
        }
      } else {
        auto r1 = Tensor<T>::from_values({np, 6}, std::move(gt6));
        auto lflow = flow_.train_loss(c_pos, r1, rng);
        terms.flow = static_cast<double>(lflow.item());
        loss = add(loss, lflow);
      }
    }

    // --- grasp classifier on labeled candidates (EquiIGD)
    if (config_.model == ModelKind::kEquiIgd && n_lab > 0) {
      std::vector<T> rot9;
      for (const auto* g : picks) {
        Eigen::Matrix3d m = quat_to_matrix(g->rotation);
        for (int col = 0; col < 3; ++col)
          for (int row = 0; row < 3; ++row) rot9.push_back(static_cast<T>(m(row, col)));
      }
      std::vector<int> lab_rows(n_lab);
      for (int i = 0; i < n_lab; ++i) lab_rows[i] = i;
      auto c_lab = gather_rows(c_used, lab_rows);
      auto p_lab = gather_rows(points, lab_rows);
      auto rot = Tensor<T>::from_values({n_lab, 9}, std::move(rot9));
      auto cbar = dam_.refine(tri, p_lab, rot, c_lab);
      auto v_pred = reshape(dam_.classify(cbar), {n_lab});
      auto vt = narrow(grasp_target, 0, 0, n_lab);
      auto lgrasp = focal_loss(v_pred, vt, static_cast<T>(config_.decoder.focal_gamma));
      terms.grasp = static_cast<double>(lgrasp.item());
      loss = add(loss, lgrasp);
    }

    terms.total = static_cast<double>(loss.item());
    return {loss, terms};
  }

  // Dense inference at all voxel centers of the workspace grid.
  InferenceResult infer(const TsdfVolume& tsdf, Rng& rng) const {
    NoGradGuard no_grad;
    using Clock = std::chrono::steady_clock;
    InferenceResult result;
    const int s = config_.encoder.grid_size;
    result.grid = s;

    auto t0 = Clock::now();
    auto tri = encoder_.encode(tsdf_tensor(tsdf));
    auto t1 = Clock::now();

    const int64_t total = static_cast<int64_t>(s) * s * s;
    result.graspness_grid.resize(total);
    result.quality_grid.resize(total);
    std::vector<float> rot6(total * 6);
    std::vector<float> vscore(total, 1.0f);
    const double cell = tsdf.cell();

    const int chunk = config_.inference.chunk;
    for (int64_t begin = 0; begin < total; begin += chunk) {
      const int n = static_cast<int>(std::min<int64_t>(chunk, total - begin));
      std::vector<T> pv(n * 3);
      for (int i = 0; i < n; ++i) {
        int64_t lin = begin + i;
        int x = static_cast<int>(lin % s), y = static_cast<int>((lin / s) % s),
            z = static_cast<int>(lin / (s * s));
        pv[3 * i] = static_cast<T>((x + 0.5) * cell);
        pv[3 * i + 1] = static_cast<T>((y + 0.5) * cell);
        pv[3 * i + 2] = static_cast<T>((z + 0.5) * cell);
      }
      auto points = Tensor<T>::from_values({n, 3}, std::move(pv));
      auto c = query_features(tri, points);
      if (config_.model == ModelKind::kEquiIgd) c = eda_.forward(tri, points, c);
      auto a = heads_.graspness(c);
      for (int i = 0; i < n; ++i)
        result.graspness_grid[begin + i] = static_cast<float>(a.data()[i]);

      if (config_.model == ModelKind::kEquiGiga) {
        auto r = heads_.rotation6d(c);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < 6; ++j)
            rot6[(begin + i) * 6 + j] = static_cast<float>(r.data()[i * 6 + j]);
        for (int i = 0; i < n; ++i)
          result.quality_grid[begin + i] = result.graspness_grid[begin + i];
      } else {
        // sample `rounds` rotations per voxel, keep the best classifier score
        auto samples = flow_.sample(c, config_.inference.rounds, rng);
        std::vector<float> best_v(n, -1.0f);
        for (auto& raw_sample : samples) {
          auto raw = sanitize_rot6d_rows(raw_sample);
          auto r9 = orthonormalize_rot6d(raw);
          auto cbar = dam_.refine(tri, points, r9, c);
          auto v = dam_.classify(cbar);
          for (int i = 0; i < n; ++i) {
            float vi = static_cast<float>(v.data()[i]);
            if (vi > best_v[i]) {
              best_v[i] = vi;
              for (int j = 0; j < 6; ++j)
                rot6[(begin + i) * 6 + j] = static_cast<float>(raw.data()[i * 6 + j]);
            }
          }
        }
        for (int i = 0; i < n; ++i) {
          vscore[begin + i] = best_v[i];
          result.quality_grid[begin + i] = result.graspness_grid[begin + i] * best_v[i];
        }
      }
    }
    auto t2 = Clock::now();

    // selection: threshold, workspace mask, sort by quality
    for (int64_t lin = 0; lin < total; ++lin) {
      double q = result.quality_grid[lin];
      if (q < config_.inference.quality_threshold) continue;
      // an undefined rotation cannot be executed
      float r6row[6];
      for (int j = 0; j < 6; ++j) r6row[j] = rot6[lin * 6 + j];
      if (!rot6d_well_conditioned(r6row)) continue;
      GraspCandidate cand;
      cand.voxel[0] = static_cast<int>(lin % s);
      cand.voxel[1] = static_cast<int>((lin / s) % s);
      cand.voxel[2] = static_cast<int>(lin / (s * s));
      cand.position = {(cand.voxel[0] + 0.5) * cell, (cand.voxel[1] + 0.5) * cell,
                       (cand.voxel[2] + 0.5) * cell};
      for (int j = 0; j < 6; ++j) cand.rotation[j] = rot6[lin * 6 + j];
      cand.graspness = result.graspness_grid[lin];
      cand.classifier = vscore[lin];
      cand.quality = q;
      if (!gripper_fits_workspace(cand)) continue;
      result.selected.push_back(cand);
    }
    std::sort(result.selected.begin(), result.selected.end(),
              [](const GraspCandidate& a, const GraspCandidate& b) { return a.quality > b.quality; });
    if (config_.inference.top_k > 0 &&
        static_cast<int>(result.selected.size()) > config_.inference.top_k)
      result.selected.resize(config_.inference.top_k);
    result.no_grasp = result.selected.empty();
    result.nms_selected = nms_for_report(result.selected, cell);
    auto t3 = Clock::now();

    auto ms = [](auto a, auto b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    result.encode_ms = ms(t0, t1);
    result.decode_ms = ms(t1, t2);
    result.select_ms = ms(t2, t3);
    return result;
  }

 private:
  void pick_labels(const SceneRecord& record, Rng& rng,
                   std::vector<const GraspLabel*>& out) const {
    const int want = config_.train.grasp_samples_per_scene;
    if (record.grasps.empty()) return;
    std::vector<int> order(record.grasps.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (int i = 0; i < std::min<int>(want, static_cast<int>(order.size())); ++i)
      out.push_back(&record.grasps[order[i]]);
  }

  static Eigen::Vector3d far_free_point(const SceneSpec& scene, Rng& rng, double min_dist) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Eigen::Vector3d p(rng.uniform(0.0, scene.workspace), rng.uniform(0.0, scene.workspace),
                        rng.uniform(0.0, scene.workspace));
      if (scene.sdf(p) > min_dist) return p;
    }
    return scene.center();
  }

  static Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows) {
    std::vector<Tensor<T>> parts;
    parts.reserve(rows.size());
    for (int r : rows) parts.push_back(narrow(x, 0, r, 1));
    return parts.size() == 1 ? parts[0] : concat(parts, 0);
  }

  bool gripper_fits_workspace(const GraspCandidate& cand) const {
    Eigen::Matrix3d r = rot6d_to_matrix(cand.rotation);
    const double ws = config_.encoder.workspace_m;
    auto inside = [ws](const Eigen::Vector3d& p) {
      return p[0] >= 0 && p[0] <= ws && p[1] >= 0 && p[1] <= ws && p[2] >= 0 && p[2] <= ws;
    };
    Eigen::Vector3d closing = r.col(0), approach = r.col(2);
    double half = config_.gripper.max_width / 2;
    return inside(cand.position + closing * half) && inside(cand.position - closing * half) &&
           inside(cand.position - approach * config_.gripper.finger_depth);
  }

  std::vector<GraspCandidate> nms_for_report(const std::vector<GraspCandidate>& sorted,
                                             double cell) const {
    std::vector<GraspCandidate> keep;
    const double radius = config_.inference.nms_radius_voxels * cell;
    for (const auto& cand : sorted) {
      bool suppressed = false;
      for (const auto& k : keep)
        if ((k.position - cand.position).norm() < radius) {
          suppressed = true;
          break;
        }
      if (!suppressed) keep.push_back(cand);
    }
    return keep;
  }

  RunConfig config_;
  ParamRegistry<T> registry_;
  TriplaneEncoder<T> encoder_;
  GigaHeads<T> heads_;
  EquivariantDeformableAttention<T> eda_;
  RotationFlow<T> flow_;
  GraspDam<T> dam_;
};

}  // namespace c4g
