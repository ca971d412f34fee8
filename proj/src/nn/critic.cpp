#include "gridattack/nn/critic.hpp"

#include <cmath>

#include "gridattack/errors.hpp"

namespace gridattack::nn {

void to_json(nlohmann::json& j, const CriticShape& s) {
  j = {{"n_lines", s.n_lines}, {"agents", s.agents},  {"embed", s.embed},
       {"attend", s.attend},   {"hidden", s.hidden}, {"per_action_head", s.per_action_head}};
}

void from_json(const nlohmann::json& j, CriticShape& s) {
  j.at("n_lines").get_to(s.n_lines);
  j.at("agents").get_to(s.agents);
  j.at("embed").get_to(s.embed);
  j.at("attend").get_to(s.attend);
  j.at("hidden").get_to(s.hidden);
  j.at("per_action_head").get_to(s.per_action_head);
}

AttentionState attention_aggregate(const Matrix& key, const Matrix& query_map, const Matrix& value,
                                   const std::vector<Vector>& embeddings, std::size_t agent, const Vector* query) {
  if (agent >= embeddings.size()) fail(ErrorKind::Dimension, "agent index out of range");
  AttentionState state;
  state.contribution = Vector::Zero(value.rows());
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    if (j != agent) state.others.push_back(j);
  }
  if (state.others.empty()) return state;

  const Vector u = query_map * (query ? *query : embeddings[agent]);
  Vector scores(static_cast<Eigen::Index>(state.others.size()));
  for (std::size_t k = 0; k < state.others.size(); ++k) {
    scores[static_cast<Eigen::Index>(k)] = (key * embeddings[state.others[k]]).dot(u);
  }
  state.weights = softmax_columns(scores);
  for (std::size_t k = 0; k < state.others.size(); ++k) {
    const Vector v = leaky_relu(value * embeddings[state.others[k]]);
    state.contribution += state.weights[static_cast<Eigen::Index>(k)] * v;
  }
  return state;
}

Critic::Critic(const CriticShape& shape) : shape_(shape) {
  if (shape.agents < 1 || shape.n_lines < 1) fail(ErrorKind::Domain, "critic needs agents and lines");
  for (std::size_t i = 0; i < shape.agents; ++i) {
    state_enc_.emplace_back(shape.n_lines, shape.embed);
    action_enc_.emplace_back(2 * shape.n_lines, shape.embed);
    head1_.emplace_back(shape.embed + shape.attend, shape.hidden);
    head2_.emplace_back(shape.hidden, shape.head_outputs());
  }
  w_key_ = Matrix::Zero(shape.attend, shape.embed);
  w_query_ = Matrix::Zero(shape.attend, shape.embed);
  w_value_ = Matrix::Zero(shape.attend, shape.embed);
}

Critic::Critic(const CriticShape& shape, Rng& rng) : Critic(shape) {
  for (std::size_t i = 0; i < shape.agents; ++i) {
    state_enc_[i].init(rng);
    action_enc_[i].init(rng);
    head1_[i].init(rng);
    head2_[i].init(rng);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.embed));
  for (Matrix* m : {&w_key_, &w_query_, &w_value_}) {
    for (Eigen::Index c = 0; c < m->cols(); ++c) {
      for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) = rng.uniform(-bound, bound);
    }
  }
}

void Critic::check(const Input& input) const {
  if (input.obs.size() != shape_.agents || input.actions.size() != shape_.agents) {
    fail(ErrorKind::Dimension, "critic input must carry one observation and action set per agent");
  }
  const Eigen::Index batch = input.obs.front().cols();
  for (std::size_t i = 0; i < shape_.agents; ++i) {
    if (input.obs[i].rows() != shape_.n_lines || input.obs[i].cols() != batch) {
      fail(ErrorKind::Dimension, "observation shape mismatch for agent " + std::to_string(i));
    }
    if (static_cast<Eigen::Index>(input.actions[i].size()) != batch) {
      fail(ErrorKind::Dimension, "action count mismatch for agent " + std::to_string(i));
    }
    for (LineId a : input.actions[i]) {
      if (static_cast<Eigen::Index>(a) >= shape_.n_lines) fail(ErrorKind::Dimension, "action out of range");
    }
  }
}

std::vector<Matrix> Critic::forward(const Input& input, Cache* cache) const {
  check(input);
  const std::size_t k_agents = shape_.agents;
  const Eigen::Index n = shape_.n_lines;
  const Eigen::Index batch = input.obs.front().cols();

  Cache local;
  Cache& c = cache ? *cache : local;
  c.agents.assign(k_agents, AgentCache{});

  for (std::size_t i = 0; i < k_agents; ++i) {
    auto& a = c.agents[i];
    a.z_pre = state_enc_[i].forward(input.obs[i]);
    a.z = leaky_relu(a.z_pre);
    a.sa_in = Matrix::Zero(2 * n, batch);
    a.sa_in.topRows(n) = input.obs[i];
    for (Eigen::Index s = 0; s < batch; ++s) {
      a.sa_in(n + static_cast<Eigen::Index>(input.actions[i][static_cast<std::size_t>(s)]), s) = 1.0;
    }
    a.e_pre = action_enc_[i].forward(a.sa_in);
    a.e = leaky_relu(a.e_pre);
    a.key = w_key_ * a.e;
    a.val_pre = w_value_ * a.e;
    a.val = leaky_relu(a.val_pre);
    if (shape_.per_action_head) {
      a.q_in = Matrix::Zero(2 * n, batch);
      a.q_in.topRows(n) = input.obs[i];
      a.q_pre = action_enc_[i].forward(a.q_in);
      a.q_emb = leaky_relu(a.q_pre);
    }
  }

  std::vector<Matrix> outputs(k_agents);
  for (std::size_t i = 0; i < k_agents; ++i) {
    auto& a = c.agents[i];
    const Matrix& q_emb = shape_.per_action_head ? a.q_emb : a.e;
    a.x = Matrix::Zero(shape_.attend, batch);
    if (k_agents > 1) {
      a.query = w_query_ * q_emb;
      Matrix scores(static_cast<Eigen::Index>(k_agents - 1), batch);
      Eigen::Index row = 0;
      for (std::size_t j = 0; j < k_agents; ++j) {
        if (j == i) continue;
        scores.row(row++) = c.agents[j].key.cwiseProduct(a.query).colwise().sum();
      }
      a.kappa = softmax_columns(scores);
      row = 0;
      for (std::size_t j = 0; j < k_agents; ++j) {
        if (j == i) continue;
        a.x += c.agents[j].val * a.kappa.row(row++).asDiagonal();
      }
    }
    a.h_in.resize(shape_.embed + shape_.attend, batch);
    a.h_in.topRows(shape_.embed) = a.z;
    a.h_in.bottomRows(shape_.attend) = a.x;
    a.h_pre = head1_[i].forward(a.h_in);
    a.h = leaky_relu(a.h_pre);
    outputs[i] = head2_[i].forward(a.h);
  }
  return outputs;
}

void Critic::backward(const Input& input, const Cache& c, const std::vector<Matrix>& d_out, Critic& grad) const {
  const std::size_t k_agents = shape_.agents;
  if (d_out.size() != k_agents) fail(ErrorKind::Dimension, "one output gradient per agent required");
  const Eigen::Index batch = input.obs.front().cols();

  std::vector<Matrix> d_key(k_agents, Matrix::Zero(shape_.attend, batch));
  std::vector<Matrix> d_val(k_agents, Matrix::Zero(shape_.attend, batch));
  std::vector<Matrix> d_query_emb(k_agents, Matrix::Zero(shape_.embed, batch));

  for (std::size_t i = 0; i < k_agents; ++i) {
    const auto& a = c.agents[i];
    Matrix dh = head2_[i].backward(a.h, d_out[i], grad.head2_[i]);
    dh = leaky_relu_backward(a.h_pre, dh);
    const Matrix dh_in = head1_[i].backward(a.h_in, dh, grad.head1_[i]);
    const Matrix dz_pre = leaky_relu_backward(a.z_pre, dh_in.topRows(shape_.embed));
    state_enc_[i].backward(input.obs[i], dz_pre, grad.state_enc_[i]);

    if (k_agents < 2) continue;
    const Matrix dx = dh_in.bottomRows(shape_.attend);
    Matrix dkappa(a.kappa.rows(), batch);
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < k_agents; ++j) {
      if (j == i) continue;
      d_val[j] += dx * a.kappa.row(row).asDiagonal();
      dkappa.row(row) = dx.cwiseProduct(c.agents[j].val).colwise().sum();
      ++row;
    }
    const Eigen::RowVectorXd weighted = a.kappa.cwiseProduct(dkappa).colwise().sum();
    const Matrix dscore = a.kappa.cwiseProduct(dkappa - Matrix::Ones(a.kappa.rows(), 1) * weighted);
    Matrix dquery = Matrix::Zero(shape_.attend, batch);
    row = 0;
    for (std::size_t j = 0; j < k_agents; ++j) {
      if (j == i) continue;
      d_key[j] += a.query * dscore.row(row).asDiagonal();
      dquery += c.agents[j].key * dscore.row(row).asDiagonal();
      ++row;
    }
    const Matrix& q_emb = shape_.per_action_head ? a.q_emb : a.e;
    grad.w_query_.noalias() += dquery * q_emb.transpose();
    d_query_emb[i] += w_query_.transpose() * dquery;
  }

  for (std::size_t j = 0; j < k_agents; ++j) {
    const auto& a = c.agents[j];
    Matrix de = Matrix::Zero(shape_.embed, batch);
    if (k_agents > 1) {
      const Matrix dval_pre = leaky_relu_backward(a.val_pre, d_val[j]);
      grad.w_value_.noalias() += dval_pre * a.e.transpose();
      grad.w_key_.noalias() += d_key[j] * a.e.transpose();
      de.noalias() += w_value_.transpose() * dval_pre;
      de.noalias() += w_key_.transpose() * d_key[j];
      if (!shape_.per_action_head) de += d_query_emb[j];
    }
    action_enc_[j].backward(a.sa_in, leaky_relu_backward(a.e_pre, de), grad.action_enc_[j]);
    if (shape_.per_action_head && k_agents > 1) {
      action_enc_[j].backward(a.q_in, leaky_relu_backward(a.q_pre, d_query_emb[j]), grad.action_enc_[j]);
    }
  }
}

Matrix Critic::taken_values(const Input& input, const std::vector<Matrix>& outputs) const {
  const Eigen::Index batch = input.obs.front().cols();
  Matrix q(static_cast<Eigen::Index>(shape_.agents), batch);
  for (std::size_t i = 0; i < shape_.agents; ++i) {
    for (Eigen::Index s = 0; s < batch; ++s) {
      const auto row = shape_.per_action_head ? static_cast<Eigen::Index>(input.actions[i][static_cast<std::size_t>(s)]) : 0;
      q(static_cast<Eigen::Index>(i), s) = outputs[i](row, s);
    }
  }
  return q;
}

Matrix Critic::action_values(const Input& input, std::size_t agent, const std::vector<Matrix>& outputs) const {
  if (shape_.per_action_head) return outputs.at(agent);
  return action_values(input, agent);
}

Matrix Critic::action_values(const Input& input, std::size_t agent) const {
  if (agent >= shape_.agents) fail(ErrorKind::Dimension, "agent index out of range");
  if (shape_.per_action_head) return forward(input).at(agent);
  const Eigen::Index batch = input.obs.front().cols();
  Matrix values(shape_.n_lines, batch);
  Input probe = input;
  for (Eigen::Index a = 0; a < shape_.n_lines; ++a) {
    std::fill(probe.actions[agent].begin(), probe.actions[agent].end(), static_cast<LineId>(a));
    values.row(a) = forward(probe).at(agent).row(0);
  }
  return values;
}

ParamRefs Critic::params() {
  ParamRefs refs;
  for (std::size_t i = 0; i < shape_.agents; ++i) {
    const std::string p = "agent" + std::to_string(i);
    state_enc_[i].collect(refs, p + ".state_encoder");
    action_enc_[i].collect(refs, p + ".action_encoder");
    head1_[i].collect(refs, p + ".head_hidden");
    head2_[i].collect(refs, p + ".head_output");
  }
  refs.push_back({"attention.key", &w_key_});
  refs.push_back({"attention.query", &w_query_});
  refs.push_back({"attention.value", &w_value_});
  return refs;
}

Critic Critic::zeros_like() const {
  Critic copy = *this;
  zero(copy.params());
  return copy;
}

}  // namespace gridattack::nn
