#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bootplace/tensor.hpp"

namespace bootplace::diff {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  // Location of the worst relative error, for diagnostics.
  int input_index = -1;
  int64_t element = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the reverse-mode gradient of the scalar function f against central
// finite differences at the given inputs. The relative-error denominator is
// floored so that entries where both gradients vanish do not divide by zero.
// f must be deterministic across calls (fix any dropout masks or disable them).
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double epsilon = 1e-5);

}  // namespace bootplace::diff
