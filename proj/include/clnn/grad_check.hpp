#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "clnn/tensor.hpp"

namespace clnn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Eigen::Index worst_index = 0;
};

// Entries whose analytic and numeric gradients are both below this magnitude
// are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-4;

/// Compares `analytic` (one gradient matrix per input) with central differences
/// (f(x+eps) - f(x-eps)) / 2eps of `loss` taken over every entry of every input.
/// `loss` must read the current contents of `inputs`.
inline GradCheckResult grad_check(const std::vector<Mat<double>*>& inputs, const std::vector<Mat<double>>& analytic,
                                  const std::function<double()>& loss, double eps = 1e-5) {
  require_shape(inputs.size() == analytic.size(), "grad_check input/gradient count");
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& x = *inputs[k];
    require_shape(x.rows() == analytic[k].rows() && x.cols() == analytic[k].cols(), "grad_check gradient shape");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x.data()[i];
      x.data()[i] = saved + eps;
      const double up = loss();
      x.data()[i] = saved - eps;
      const double down = loss();
      x.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      if (rel > res.max_rel_error) res = {rel, k, i};
    }
  }
  return res;
}

}  // namespace clnn
