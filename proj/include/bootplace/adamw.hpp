#pragma once

#include <cstdint>
#include <vector>

#include "bootplace/tensor.hpp"

namespace bootplace::diff {

struct AdamWConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay: the decay term scales the weights
// directly each step and never enters the moment estimates.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  // Applies one update from the gradients currently stored on the parameters.
  // Parameters without an allocated gradient are treated as zero-gradient.
  void step();
  void zero_grad();

  int64_t step_count() const { return step_; }
  AdamWConfig& config() { return config_; }
  const AdamWConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  AdamWConfig config_;
  int64_t step_ = 0;
};

}  // namespace bootplace::diff
