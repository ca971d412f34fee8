#pragma once

#include <vector>

#include <json.hpp>

#include "gridattack/grid.hpp"
#include "gridattack/nn/layers.hpp"

namespace gridattack::nn {

struct CriticShape {
  Eigen::Index n_lines = 0;
  std::size_t agents = 1;
  Eigen::Index embed = 64;
  Eigen::Index attend = 32;
  Eigen::Index hidden = 128;
  /// Per-action head: every agent's head emits one value per candidate own
  /// action and the attention query is built with a zero action encoding.
  /// When false the head is scalar and the query uses the taken action.
  bool per_action_head = true;

  Eigen::Index head_outputs() const { return per_action_head ? n_lines : 1; }
  friend bool operator==(const CriticShape&, const CriticShape&) = default;
};

void to_json(nlohmann::json& j, const CriticShape& s);
void from_json(const nlohmann::json& j, CriticShape& s);

/// Result of attending from one agent over the others.
struct AttentionState {
  std::vector<std::size_t> others;  // agents j != i, ascending
  Vector weights;                   // kappa_j, aligned with `others`
  Vector contribution;              // x_i
};

/// kappa_j = softmax_{j != i}((Wk e_j)^T Wq e_query), x_i = sum_j kappa_j phi(Wv e_j).
/// `query` defaults to embeddings[i]. With a single agent x_i is zero.
AttentionState attention_aggregate(const Matrix& key, const Matrix& query_map, const Matrix& value,
                                   const std::vector<Vector>& embeddings, std::size_t agent,
                                   const Vector* query = nullptr);

/// Centralized attention critic. Each agent owns a state encoder, a
/// state-action encoder and a two-layer head; the key/query/value maps are
/// shared by all agents.
class Critic {
 public:
  struct Input {
    std::vector<Matrix> obs;                      // per agent: n_lines x batch
    std::vector<std::vector<LineId>> actions;     // per agent: batch entries
  };

  struct AgentCache {
    Matrix z_pre, z;
    Matrix sa_in, e_pre, e;
    Matrix q_in, q_pre, q_emb;  // query embedding (per-action mode only)
    Matrix key, val_pre, val;
    Matrix query, kappa, x;
    Matrix h_in, h_pre, h;
  };
  struct Cache {
    std::vector<AgentCache> agents;
  };

  Critic() = default;
  explicit Critic(const CriticShape& shape);
  Critic(const CriticShape& shape, Rng& rng);

  const CriticShape& shape() const noexcept { return shape_; }

  /// Head outputs per agent (head_outputs() x batch).
  std::vector<Matrix> forward(const Input& input, Cache* cache = nullptr) const;
  void backward(const Input& input, const Cache& cache, const std::vector<Matrix>& d_out, Critic& grad) const;

  /// Q_i(o, a) at the taken actions, agents x batch.
  Matrix taken_values(const Input& input, const std::vector<Matrix>& outputs) const;

  /// Q_i(o, (a_i', a_-i)) for every candidate a_i', n_lines x batch.
  Matrix action_values(const Input& input, std::size_t agent) const;
  Matrix action_values(const Input& input, std::size_t agent, const std::vector<Matrix>& outputs) const;

  ParamRefs params();
  Critic zeros_like() const;

  const Matrix& key_map() const { return w_key_; }
  const Matrix& query_map() const { return w_query_; }
  const Matrix& value_map() const { return w_value_; }
  Dense& state_encoder(std::size_t i) { return state_enc_.at(i); }
  Dense& action_encoder(std::size_t i) { return action_enc_.at(i); }
  Dense& head_hidden(std::size_t i) { return head1_.at(i); }
  Dense& head_output(std::size_t i) { return head2_.at(i); }
  const Dense& state_encoder(std::size_t i) const { return state_enc_.at(i); }
  const Dense& action_encoder(std::size_t i) const { return action_enc_.at(i); }
  const Dense& head_hidden(std::size_t i) const { return head1_.at(i); }
  const Dense& head_output(std::size_t i) const { return head2_.at(i); }

 private:
  void check(const Input& input) const;

  CriticShape shape_;
  std::vector<Dense> state_enc_;   // z_i
  std::vector<Dense> action_enc_;  // q_i, input [o_i; onehot(a_i)]
  std::vector<Dense> head1_, head2_;  // f_i
  Matrix w_key_, w_query_, w_value_;  // attend x embed, shared
};

}  // namespace gridattack::nn
