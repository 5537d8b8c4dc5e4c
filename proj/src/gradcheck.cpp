#include "bootplace/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace bootplace::diff {

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double epsilon) {
  constexpr double kDenomFloor = 1e-3;
  for (const Tensor& t : inputs) t.impl_ptr()->requires_grad = true;
  for (const Tensor& t : inputs) const_cast<Tensor&>(t).zero_grad();

  Tensor loss = f(inputs);
  if (loss.numel() != 1) {
    throw std::invalid_argument("grad_check: function must return a scalar");
  }
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    analytic.push_back(const_cast<Tensor&>(t).grad());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    std::vector<double>& vals = const_cast<Tensor&>(inputs[ti]).values();
    for (size_t ei = 0; ei < vals.size(); ++ei) {
      double saved = vals[ei];
      vals[ei] = saved + epsilon;
      double up = f(inputs).item();
      vals[ei] = saved - epsilon;
      double down = f(inputs).item();
      vals[ei] = saved;
      double numeric = (up - down) / (2.0 * epsilon);
      double a = analytic[ti][ei];
      double abs_err = std::fabs(a - numeric);
      double rel_err = abs_err / std::max({std::fabs(a), std::fabs(numeric), kDenomFloor});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.input_index = static_cast<int>(ti);
        report.element = static_cast<int64_t>(ei);
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace bootplace::diff
