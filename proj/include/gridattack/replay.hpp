#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridattack/grid.hpp"
#include "gridattack/rng.hpp"

namespace gridattack {

/// Joint transition (o_t, a_t, o_{t+1}, r_{t+1}). Observations are shared by
/// all agents, so one line-state vector is stored per time step.
struct Transition {
  std::vector<std::uint8_t> obs;
  std::vector<LineId> actions;
  std::vector<std::uint8_t> next_obs;
  std::vector<double> rewards;
  bool done = false;
};

struct ReplayConfig {
  std::size_t capacity = 15000;  // N_m
  double alpha = 0.6;
  double beta = 0.4;
  double beta_step = 0.001;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
};

/// Binary tree of partial sums over leaf weights.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t leaf, double weight);
  double get(std::size_t leaf) const { return nodes_[base_ + leaf]; }
  double total() const { return nodes_[1]; }
  /// Leaf whose cumulative interval contains `mass`, restricted to leaves
  /// with positive weight.
  std::size_t find(double mass) const;
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t base_;
  std::vector<double> nodes_;
};

/// Handle to a stored transition; stale once its slot is overwritten.
struct ReplayRef {
  std::size_t slot = 0;
  std::uint64_t serial = 0;
};

struct ReplaySample {
  std::vector<ReplayRef> refs;
  std::vector<const Transition*> transitions;
  std::vector<double> probabilities;  // P_g at draw time
  std::vector<double> weights;        // normalized IS weights, sum to 1
};

/// Proportional prioritized replay: P_g = p_g^alpha / sum_u p_u^alpha, IS
/// weights (N_m P_g)^-beta normalized over the sampled batch. Ring storage
/// evicts oldest first. Not internally synchronized.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(const ReplayConfig& config);

  /// Priorities below epsilon are raised to epsilon. Throws Error{Domain}
  /// for non-positive or non-finite priorities.
  void insert(Transition transition, double priority);

  /// B independent draws with replacement. Throws Error{State} when fewer
  /// than B transitions are stored.
  ReplaySample sample(std::size_t batch);

  /// p_g <- |delta_g| + epsilon. Stale refs are skipped and counted.
  void update_priorities(std::span<const ReplayRef> refs, std::span<const double> abs_td_errors);

  /// Normalized IS weights under the current priorities.
  std::vector<double> importance_weights(std::span<const ReplayRef> refs) const;

  void anneal_beta();

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return config_.capacity; }
  double beta() const noexcept { return beta_; }
  double alpha() const noexcept { return config_.alpha; }
  double epsilon() const noexcept { return config_.epsilon; }
  std::size_t stale_updates() const noexcept { return stale_updates_; }
  double max_priority() const noexcept { return max_priority_; }

  double priority(std::size_t slot) const { return priorities_.at(slot); }
  double probability(std::size_t slot) const;
  bool is_live(const ReplayRef& ref) const;
  const Transition& at(std::size_t slot) const { return storage_.at(slot); }
  /// Slot of the i-th oldest live transition.
  std::size_t slot_by_age(std::size_t i) const;

 private:
  double scaled(double priority) const;

  ReplayConfig config_;
  std::vector<Transition> storage_;
  std::vector<double> priorities_;
  std::vector<std::uint64_t> serials_;
  SumTree tree_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
  double beta_;
  double max_priority_ = 1.0;
  std::size_t stale_updates_ = 0;
  Rng rng_;
};

}  // namespace gridattack
