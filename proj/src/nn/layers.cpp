#include "gridattack/nn/layers.hpp"

#include <cmath>

#include "gridattack/errors.hpp"

namespace gridattack::nn {

std::vector<Matrix> snapshot(const ParamRefs& params) {
  std::vector<Matrix> values;
  values.reserve(params.size());
  for (const auto& p : params) values.push_back(*p.value);
  return values;
}

void restore(const ParamRefs& params, const std::vector<Matrix>& values) {
  if (values.size() != params.size()) fail(ErrorKind::Dimension, "snapshot size mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) *params[k].value = values[k];
}

void zero(const ParamRefs& params) {
  for (const auto& p : params) p.value->setZero();
}

std::size_t parameter_count(const ParamRefs& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.value->size());
  return n;
}

void soft_update(const ParamRefs& target, const ParamRefs& online, double xi) {
  if (target.size() != online.size()) fail(ErrorKind::Dimension, "parameter sets differ in tensor count");
  for (std::size_t k = 0; k < target.size(); ++k) {
    Matrix& t = *target[k].value;
    const Matrix& o = *online[k].value;
    if (t.rows() != o.rows() || t.cols() != o.cols()) {
      fail(ErrorKind::Dimension, "shape mismatch for tensor " + target[k].name);
    }
    if (xi == 1.0) {
      t = o;
    } else if (xi != 0.0) {
      t = xi * o + (1.0 - xi) * t;
    }
  }
}

double clip_global_norm(const ParamRefs& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.value->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads) *g.value *= scale;
  }
  return norm;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

Matrix log_softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

namespace {
void fan_in_uniform(Matrix& w, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
  }
}
}  // namespace

// --- Dense ------------------------------------------------------------------

void Dense::init(Rng& rng) {
  fan_in_uniform(weight, weight.cols(), rng);
  bias.setZero();
}

Matrix Dense::forward(const Matrix& x) const {
  Matrix y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy, Dense& grad) const {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias.col(0) += dy.rowwise().sum();
  return weight.transpose() * dy;
}

void Dense::collect(ParamRefs& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

// --- Conv1d -----------------------------------------------------------------

Conv1d::Conv1d(Eigen::Index in_ch, Eigen::Index out_ch, Eigen::Index len, Eigen::Index k)
    : in_channels(in_ch),
      out_channels(out_ch),
      length(len),
      kernel(k),
      weight(Matrix::Zero(out_ch, in_ch * k)),
      bias(Matrix::Zero(out_ch, 1)) {
  if (k % 2 == 0) fail(ErrorKind::Domain, "convolution kernel must be odd");
}

void Conv1d::init(Rng& rng) {
  fan_in_uniform(weight, in_channels * kernel, rng);
  bias.setZero();
}

Matrix Conv1d::unfold(const Matrix& x) const {
  const Eigen::Index batch = x.cols();
  const Eigen::Index pad = kernel / 2;
  Matrix patches = Matrix::Zero(in_channels * kernel, length * batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (Eigen::Index ci = 0; ci < in_channels; ++ci) {
      for (Eigen::Index kk = 0; kk < kernel; ++kk) {
        const Eigen::Index row = ci * kernel + kk;
        for (Eigen::Index l = 0; l < length; ++l) {
          const Eigen::Index src = l + kk - pad;
          if (src >= 0 && src < length) patches(row, s * length + l) = x(ci * length + src, s);
        }
      }
    }
  }
  return patches;
}

Matrix Conv1d::fold(const Matrix& dpatches, Eigen::Index batch) const {
  const Eigen::Index pad = kernel / 2;
  Matrix dx = Matrix::Zero(in_channels * length, batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (Eigen::Index ci = 0; ci < in_channels; ++ci) {
      for (Eigen::Index kk = 0; kk < kernel; ++kk) {
        const Eigen::Index row = ci * kernel + kk;
        for (Eigen::Index l = 0; l < length; ++l) {
          const Eigen::Index src = l + kk - pad;
          if (src >= 0 && src < length) dx(ci * length + src, s) += dpatches(row, s * length + l);
        }
      }
    }
  }
  return dx;
}

Matrix Conv1d::forward(const Matrix& x, Matrix* patches_out) const {
  if (x.rows() != in_channels * length) fail(ErrorKind::Dimension, "convolution input has the wrong length");
  const Eigen::Index batch = x.cols();
  Matrix patches = unfold(x);
  Matrix y_mat = weight * patches;  // out_channels x (length * batch)
  y_mat.colwise() += bias.col(0);
  Matrix y(out_channels * length, batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (Eigen::Index co = 0; co < out_channels; ++co) {
      y.block(co * length, s, length, 1) = y_mat.block(co, s * length, 1, length).transpose();
    }
  }
  if (patches_out) *patches_out = std::move(patches);
  return y;
}

Matrix Conv1d::backward(const Matrix& patches, const Matrix& dy, Conv1d& grad) const {
  const Eigen::Index batch = dy.cols();
  Matrix dy_mat(out_channels, length * batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (Eigen::Index co = 0; co < out_channels; ++co) {
      dy_mat.block(co, s * length, 1, length) = dy.block(co * length, s, length, 1).transpose();
    }
  }
  grad.weight.noalias() += dy_mat * patches.transpose();
  grad.bias.col(0) += dy_mat.rowwise().sum();
  const Matrix dpatches = weight.transpose() * dy_mat;
  return fold(dpatches, batch);
}

void Conv1d::collect(ParamRefs& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

// --- AvgPool1d ----------------------------------------------------------------

Matrix AvgPool1d::forward(const Matrix& x) const {
  const Eigen::Index lo = out_length();
  Matrix y(channels * lo, x.cols());
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index j = 0; j < lo; ++j) {
      const Eigen::Index a = c * length + 2 * j;
      if (2 * j + 1 < length) {
        y.row(c * lo + j) = 0.5 * (x.row(a) + x.row(a + 1));
      } else {
        y.row(c * lo + j) = x.row(a);
      }
    }
  }
  return y;
}

Matrix AvgPool1d::backward(const Matrix& dy) const {
  const Eigen::Index lo = out_length();
  Matrix dx = Matrix::Zero(channels * length, dy.cols());
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index j = 0; j < lo; ++j) {
      const Eigen::Index a = c * length + 2 * j;
      if (2 * j + 1 < length) {
        dx.row(a) += 0.5 * dy.row(c * lo + j);
        dx.row(a + 1) += 0.5 * dy.row(c * lo + j);
      } else {
        dx.row(a) += dy.row(c * lo + j);
      }
    }
  }
  return dx;
}

}  // namespace gridattack::nn
