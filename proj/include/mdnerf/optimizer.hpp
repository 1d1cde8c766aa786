#pragma once

#include <cmath>
#include <vector>

#include "mdnerf/common.hpp"

namespace mdnerf {

// Adaptive-moment (Adam) optimizer over a flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(size_t n, double beta1 = 0.9, double beta2 = 0.999,
                     double epsilon = 1e-8)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
        first_moment_(n, 0.0), second_moment_(n, 0.0) {}

  size_t size() const { return first_moment_.size(); }
  int steps_taken() const { return step_; }

  void step(std::vector<double>& params, const std::vector<double>& grads,
            double lr) {
    if (params.size() != first_moment_.size() || grads.size() != params.size())
      throw ArgumentError("AdamState::step: shape mismatch");
    for (double g : grads)
      if (!std::isfinite(g))
        throw NumericalError("AdamState::step: non-finite gradient, update refused");
    ++step_;
    const double bias1 = 1.0 - std::pow(beta1_, step_);
    const double bias2 = 1.0 - std::pow(beta2_, step_);
    for (size_t i = 0; i < params.size(); ++i) {
      first_moment_[i] = beta1_ * first_moment_[i] + (1.0 - beta1_) * grads[i];
      second_moment_[i] =
          beta2_ * second_moment_[i] + (1.0 - beta2_) * grads[i] * grads[i];
      const double m_hat = first_moment_[i] / bias1;
      const double v_hat = second_moment_[i] / bias2;
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  int step_ = 0;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
};

// Linear warm-up to 1, then cosine decay to 0 at total_steps.
inline double warmup_cosine_multiplier(int step, int warmup_steps, int total_steps) {
  if (warmup_steps > 0 && step < warmup_steps)
    return static_cast<double>(step) / warmup_steps;
  if (total_steps <= warmup_steps) return 1.0;
  const double progress = static_cast<double>(step - warmup_steps) /
                          (total_steps - warmup_steps);
  return 0.5 * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

}  // namespace mdnerf
