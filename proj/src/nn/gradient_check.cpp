#include "gridattack/nn/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridattack/errors.hpp"

namespace gridattack::nn {

GradientCheckReport gradient_check(const ParamRefs& params, const ParamRefs& analytic,
                                   const std::function<double()>& loss, const GradientCheckOptions& options) {
  if (params.size() != analytic.size()) fail(ErrorKind::Dimension, "gradient set does not match parameters");
  auto evaluate = [&loss] {
    const double value = loss();
    if (!std::isfinite(value)) fail(ErrorKind::Numeric, "loss is not finite");
    return value;
  };
  evaluate();

  Rng rng(options.seed);
  GradientCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = *params[k].value;
    const Matrix& g = *analytic[k].value;
    if (g.rows() != w.rows() || g.cols() != w.cols()) {
      fail(ErrorKind::Dimension, "gradient shape mismatch for " + params[k].name);
    }
    std::vector<Eigen::Index> indices(static_cast<std::size_t>(w.size()));
    std::iota(indices.begin(), indices.end(), Eigen::Index{0});
    if (options.samples_per_tensor > 0 && indices.size() > options.samples_per_tensor) {
      for (std::size_t s = 0; s < options.samples_per_tensor; ++s) {
        std::swap(indices[s], indices[s + rng.index(indices.size() - s)]);
      }
      indices.resize(options.samples_per_tensor);
    }
    for (Eigen::Index idx : indices) {
      double& weight = w.data()[idx];
      const double original = weight;
      const double h = options.relative_step * std::max(1.0, std::abs(original));
      weight = original + h;
      const double up = evaluate();
      weight = original - h;
      const double down = evaluate();
      weight = original;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = g.data()[idx];
      const double err = std::abs(exact - numeric) / std::max(std::abs(numeric), options.denominator_floor);
      ++report.checked;
      if (err > report.max_relative_error || report.worst_tensor.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_tensor = params[k].name;
        report.worst_index = idx;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace gridattack::nn
