#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridattack/rng.hpp"

namespace gridattack::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Non-owning view of a network's named weight tensors, in a fixed order.
struct ParamRef {
  std::string name;
  Matrix* value;
};
using ParamRefs = std::vector<ParamRef>;

/// Copy of the tensor values; used for snapshots and finite differences.
std::vector<Matrix> snapshot(const ParamRefs& params);
void restore(const ParamRefs& params, const std::vector<Matrix>& values);
void zero(const ParamRefs& params);
std::size_t parameter_count(const ParamRefs& params);

/// target <- xi * online + (1 - xi) * target, tensor by tensor.
void soft_update(const ParamRefs& target, const ParamRefs& online, double xi);

/// Scale every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(const ParamRefs& grads, double max_norm);

constexpr double kLeakySlope = 0.01;

inline Matrix leaky_relu(const Matrix& x) { return x.cwiseMax(kLeakySlope * x); }

/// dX = dY * phi'(pre)
inline Matrix leaky_relu_backward(const Matrix& pre, const Matrix& dy) {
  return dy.cwiseProduct(pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
}

/// Column-wise softmax and log-softmax.
Matrix softmax_columns(const Matrix& logits);
Matrix log_softmax_columns(const Matrix& logits);

/// Fully connected layer acting on column batches: Y = W X + b.
struct Dense {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out) : weight(Matrix::Zero(out, in)), bias(Matrix::Zero(out, 1)) {}

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  /// Accumulates into grad and returns dX.
  Matrix backward(const Matrix& x, const Matrix& dy, Dense& grad) const;
  void collect(ParamRefs& out, const std::string& prefix);
};

/// One-dimensional convolution with odd kernel, stride 1 and zero "same"
/// padding. Activations are (channels * length) x batch, channel-major.
struct Conv1d {
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  Eigen::Index length = 0;
  Eigen::Index kernel = 3;
  Matrix weight;  // out_channels x (in_channels * kernel)
  Matrix bias;    // out_channels x 1

  Conv1d() = default;
  Conv1d(Eigen::Index in_ch, Eigen::Index out_ch, Eigen::Index len, Eigen::Index k);

  void init(Rng& rng);
  /// Returns the output and the unfolded input patches used by backward.
  Matrix forward(const Matrix& x, Matrix* patches = nullptr) const;
  Matrix backward(const Matrix& patches, const Matrix& dy, Conv1d& grad) const;
  void collect(ParamRefs& out, const std::string& prefix);

 private:
  Matrix unfold(const Matrix& x) const;
  Matrix fold(const Matrix& dpatches, Eigen::Index batch) const;
};

/// Average pooling of width 2, stride 2; a trailing odd element forms its
/// own window.
struct AvgPool1d {
  Eigen::Index channels = 0;
  Eigen::Index length = 0;

  Eigen::Index out_length() const { return (length + 1) / 2; }
  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& dy) const;
};

}  // namespace gridattack::nn
