#pragma once

#include "gridattack/nn/layers.hpp"

namespace gridattack::nn {

/// Adaptive-moment optimizer. Moment buffers follow the order of the
/// ParamRefs it is first stepped with.
class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// params -= lr * mhat / (sqrt(vhat) + eps)
  void step(const ParamRefs& params, const ParamRefs& grads);

  double learning_rate() const noexcept { return lr_; }
  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace gridattack::nn
