#include "bootplace/adamw.hpp"

#include <cmath>

namespace bootplace::diff {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const Tensor& p : params_) {
    first_moment_.emplace_back(p.numel(), 0.0);
    second_moment_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    std::vector<double>& values = p.values();
    std::vector<double>& m = first_moment_[i];
    std::vector<double>& v = second_moment_[i];
    const bool has_grad = p.has_grad();
    const std::vector<double>* grad = has_grad ? &p.grad() : nullptr;
    for (size_t j = 0; j < values.size(); ++j) {
      const double g = has_grad ? (*grad)[j] : 0.0;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      values[j] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                                 config_.weight_decay * values[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace bootplace::diff
