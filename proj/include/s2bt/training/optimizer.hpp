#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "s2bt/error.hpp"
#include "s2bt/grad/tensor.hpp"

namespace s2bt::training {

struct AdamConfig {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Rescale the group's gradient to this global L2 norm when larger; 0 disables.
  double clip_norm = 5.0;
};

// Adaptive-moment optimizer over one parameter group. step() consumes the
// accumulated gradients and zeroes them; it never touches tensors outside the
// group.
template <std::floating_point T>
class Adam {
 public:
  using Group = std::vector<std::pair<std::string, grad::Tensor<T>>>;

  Adam(Group group, AdamConfig config) : group_(std::move(group)), config_(config) {
    if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
    for (const auto& [name, t] : group_) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  double gradient_norm() const {
    double sq = 0.0;
    for (const auto& [name, t] : group_)
      for (T g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(sq);
  }

  void step() {
    ++steps_;
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
      const double norm = gradient_norm();
      if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < group_.size(); ++k) {
      grad::Tensor<T> t = group_[k].second;
      auto values = t.values();
      auto grads = t.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = static_cast<double>(grads[i]) * scale;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double update = config_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
        values[i] = static_cast<T>(static_cast<double>(values[i]) - update);
      }
      t.zero_grad();
    }
  }

  std::size_t steps() const { return steps_; }
  const Group& group() const { return group_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  Group group_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace s2bt::training
