#include "gridattack/nn/actor.hpp"

#include "gridattack/errors.hpp"

namespace gridattack::nn {

void to_json(nlohmann::json& j, const ActorShape& s) {
  j = {{"n_lines", s.n_lines},
       {"conv1_channels", s.conv1_channels},
       {"conv2_channels", s.conv2_channels},
       {"kernel", s.kernel},
       {"hidden", s.hidden}};
}

void from_json(const nlohmann::json& j, ActorShape& s) {
  j.at("n_lines").get_to(s.n_lines);
  j.at("conv1_channels").get_to(s.conv1_channels);
  j.at("conv2_channels").get_to(s.conv2_channels);
  j.at("kernel").get_to(s.kernel);
  j.at("hidden").get_to(s.hidden);
}

Actor::Actor(const ActorShape& shape) : shape_(shape) {
  if (shape.n_lines < 1) fail(ErrorKind::Domain, "actor needs at least one line");
  conv1_ = Conv1d(1, shape.conv1_channels, shape.n_lines, shape.kernel);
  pool1_ = AvgPool1d{shape.conv1_channels, shape.n_lines};
  const Eigen::Index l1 = pool1_.out_length();
  conv2_ = Conv1d(shape.conv1_channels, shape.conv2_channels, l1, shape.kernel);
  pool2_ = AvgPool1d{shape.conv2_channels, l1};
  const Eigen::Index flat = shape.conv2_channels * pool2_.out_length();
  fc1_ = Dense(flat, shape.hidden);
  fc2_ = Dense(shape.hidden, shape.n_lines);
}

Actor::Actor(const ActorShape& shape, Rng& rng) : Actor(shape) {
  conv1_.init(rng);
  conv2_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

Matrix Actor::logits(const Matrix& obs, Cache* cache) const {
  if (obs.rows() != shape_.n_lines) {
    fail(ErrorKind::Dimension, "observation has " + std::to_string(obs.rows()) + " entries, actor expects " +
                                   std::to_string(shape_.n_lines));
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = obs;
  c.pre1 = conv1_.forward(obs, &c.patches1);
  c.pooled1 = pool1_.forward(leaky_relu(c.pre1));
  c.pre2 = conv2_.forward(c.pooled1, &c.patches2);
  c.pooled2 = pool2_.forward(leaky_relu(c.pre2));
  c.pre3 = fc1_.forward(c.pooled2);
  c.hidden = leaky_relu(c.pre3);
  return fc2_.forward(c.hidden);
}

void Actor::backward(const Cache& c, const Matrix& dlogits, Actor& grad) const {
  Matrix d = fc2_.backward(c.hidden, dlogits, grad.fc2_);
  d = leaky_relu_backward(c.pre3, d);
  d = fc1_.backward(c.pooled2, d, grad.fc1_);
  d = pool2_.backward(d);
  d = leaky_relu_backward(c.pre2, d);
  d = conv2_.backward(c.patches2, d, grad.conv2_);
  d = pool1_.backward(d);
  d = leaky_relu_backward(c.pre1, d);
  conv1_.backward(c.patches1, d, grad.conv1_);
}

ParamRefs Actor::params() {
  ParamRefs refs;
  conv1_.collect(refs, "conv1");
  conv2_.collect(refs, "conv2");
  fc1_.collect(refs, "fc1");
  fc2_.collect(refs, "fc2");
  return refs;
}

Actor Actor::zeros_like() const {
  Actor copy = *this;
  zero(copy.params());
  return copy;
}

}  // namespace gridattack::nn
