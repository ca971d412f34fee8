#include "gridattack/nn/optim.hpp"

#include <cmath>

#include "gridattack/errors.hpp"

namespace gridattack::nn {

void Adam::step(const ParamRefs& params, const ParamRefs& grads) {
  if (params.size() != grads.size()) fail(ErrorKind::Dimension, "parameter and gradient sets differ");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size()) fail(ErrorKind::Dimension, "optimizer bound to a different parameter set");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *grads[k].value;
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto mhat = m_[k].array() / c1;
    const auto vhat = v_[k].array() / c2;
    params[k].value->array() -= lr_ * mhat / (vhat.sqrt() + eps_);
  }
}

}  // namespace gridattack::nn
