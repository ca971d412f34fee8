#pragma once

#include <functional>
#include <string>

#include "gridattack/nn/layers.hpp"

namespace gridattack::nn {

struct GradientCheckOptions {
  double relative_step = 1e-6;    // h = relative_step * max(1, |w|)
  double denominator_floor = 1e-6;
  std::size_t samples_per_tensor = 0;  // 0 checks every weight
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compare analytic gradients against central differences of `loss`.
/// Reports max |analytic - numeric| / max(|numeric|, floor). Throws
/// Error{Numeric} if the loss is not finite.
GradientCheckReport gradient_check(const ParamRefs& params, const ParamRefs& analytic,
                                   const std::function<double()>& loss, const GradientCheckOptions& options = {});

}  // namespace gridattack::nn
