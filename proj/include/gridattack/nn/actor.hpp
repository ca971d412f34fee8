#pragma once

#include <json.hpp>

#include "gridattack/nn/layers.hpp"

namespace gridattack::nn {

struct ActorShape {
  Eigen::Index n_lines = 0;
  Eigen::Index conv1_channels = 8;
  Eigen::Index conv2_channels = 16;
  Eigen::Index kernel = 3;
  Eigen::Index hidden = 128;

  friend bool operator==(const ActorShape&, const ActorShape&) = default;
};

void to_json(nlohmann::json& j, const ActorShape& s);
void from_json(const nlohmann::json& j, ActorShape& s);

/// Policy network over line ids: conv -> pool -> conv -> pool -> flatten ->
/// dense -> dense, with leaky-rectifier activations. The last layer emits
/// logits; softmax turns them into the attack distribution. The same body
/// doubles as the value network of the single-agent baseline.
class Actor {
 public:
  struct Cache {
    Matrix input;
    Matrix patches1, pre1, pooled1;
    Matrix patches2, pre2, pooled2;
    Matrix pre3, hidden;
  };

  Actor() = default;
  explicit Actor(const ActorShape& shape);
  Actor(const ActorShape& shape, Rng& rng);

  const ActorShape& shape() const noexcept { return shape_; }

  /// obs is n_lines x batch. Returns n_lines x batch logits.
  Matrix logits(const Matrix& obs, Cache* cache = nullptr) const;
  Matrix probabilities(const Matrix& obs) const { return softmax_columns(logits(obs)); }

  /// Accumulate parameter gradients for dL/dlogits into grad.
  void backward(const Cache& cache, const Matrix& dlogits, Actor& grad) const;

  ParamRefs params();
  Actor zeros_like() const;

  Dense& output_layer() { return fc2_; }

 private:
  ActorShape shape_;
  Conv1d conv1_, conv2_;
  AvgPool1d pool1_, pool2_;
  Dense fc1_, fc2_;
};

}  // namespace gridattack::nn
