// Adam optimizer with the step-decay learning-rate schedule.
#pragma once

#include <cmath>
#include <vector>

#include "c4g/tensor.hpp"

namespace c4g {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Learning rate is multiplied by decay_factor when these (1-based) epochs
  // begin; defaults follow a 12-epoch run decaying at the 9th and 11th.
  std::vector<int> decay_epochs = {9, 11};
  double decay_factor = 0.1;

  double lr_at_epoch(int epoch) const {
    double lr = learning_rate;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= decay_factor;
    return lr;
  }
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }

  void zero_grad(std::vector<Parameter<T>>& params) {
    for (auto& p : params) p.tensor.zero_grad();
  }

  // One update over all parameters; `epoch` selects the scheduled rate.
  void step(std::vector<Parameter<T>>& params, int epoch = 1) {
    ensure_state(params);
    ++t_;
    const double lr = config_.lr_at_epoch(epoch);
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bias1 = 1.0 - std::pow(b1, t_);
    const double bias2 = 1.0 - std::pow(b2, t_);
    for (size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].tensor;
      C4G_CHECK(p.has_grad(), ErrorKind::kState,
                "parameter '" << params[k].name << "' has no gradient; run backward first");
      const auto& g = p.grad();
      T* v = p.mutable_data();
      auto& m1 = m_[k];
      auto& m2 = v_[k];
      for (size_t i = 0; i < g.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        m1[i] = b1 * m1[i] + (1.0 - b1) * gi;
        m2[i] = b2 * m2[i] + (1.0 - b2) * gi * gi;
        double mhat = m1[i] / bias1;
        double vhat = m2[i] / bias2;
        v[i] = static_cast<T>(static_cast<double>(v[i]) -
                              lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
  }

 private:
  void ensure_state(const std::vector<Parameter<T>>& params) {
    if (m_.size() == params.size()) return;
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  AdamConfig config_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace c4g
