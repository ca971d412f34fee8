#include "gridattack/replay.hpp"

#include <algorithm>
#include <cmath>

#include "gridattack/errors.hpp"

namespace gridattack {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), base_(1) {
  while (base_ < capacity_) base_ <<= 1;
  nodes_.assign(2 * base_, 0.0);
}

void SumTree::set(std::size_t leaf, double weight) {
  std::size_t node = base_ + leaf;
  nodes_[node] = weight;
  for (node >>= 1; node >= 1; node >>= 1) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < base_) {
    const std::size_t left = 2 * node;
    if ((mass < nodes_[left] && nodes_[left] > 0.0) || nodes_[left + 1] <= 0.0) {
      node = left;
    } else {
      mass -= nodes_[left];
      node = left + 1;
    }
  }
  return node - base_;
}

ReplayBuffer::ReplayBuffer(const ReplayConfig& config)
    : config_(config),
      storage_(config.capacity),
      priorities_(config.capacity, 0.0),
      serials_(config.capacity, 0),
      tree_(config.capacity),
      beta_(config.beta),
      rng_(config.seed) {
  if (config.capacity < 1) fail(ErrorKind::Validation, "replay capacity must be positive");
  if (!(config.epsilon > 0.0)) fail(ErrorKind::Validation, "replay epsilon must be positive");
  if (config.alpha < 0.0 || config.beta < 0.0 || config.beta > 1.0) {
    fail(ErrorKind::Validation, "replay exponents out of range");
  }
}

double ReplayBuffer::scaled(double priority) const {
  return config_.alpha == 0.0 ? 1.0 : std::pow(priority, config_.alpha);
}

void ReplayBuffer::insert(Transition transition, double priority) {
  if (!(priority > 0.0) || !std::isfinite(priority)) fail(ErrorKind::Domain, "priority must be positive and finite");
  priority = std::max(priority, config_.epsilon);
  const std::size_t slot = next_;
  storage_[slot] = std::move(transition);
  priorities_[slot] = priority;
  serials_[slot] = ++inserted_;
  tree_.set(slot, scaled(priority));
  max_priority_ = std::max(max_priority_, priority);
  next_ = (next_ + 1) % config_.capacity;
  size_ = std::min(size_ + 1, config_.capacity);
}

double ReplayBuffer::probability(std::size_t slot) const {
  if (slot >= size_ && size_ < config_.capacity) return 0.0;
  return tree_.get(slot) / tree_.total();
}

bool ReplayBuffer::is_live(const ReplayRef& ref) const {
  return ref.slot < config_.capacity && ref.serial != 0 && serials_[ref.slot] == ref.serial;
}

std::size_t ReplayBuffer::slot_by_age(std::size_t i) const {
  if (i >= size_) fail(ErrorKind::Domain, "replay age index out of range");
  const std::size_t oldest = size_ < config_.capacity ? 0 : next_;
  return (oldest + i) % config_.capacity;
}

ReplaySample ReplayBuffer::sample(std::size_t batch) {
  if (batch == 0) fail(ErrorKind::Domain, "batch size must be positive");
  if (size_ < batch) {
    fail(ErrorKind::State, "replay holds " + std::to_string(size_) + " transitions, need " + std::to_string(batch));
  }
  ReplaySample out;
  out.refs.reserve(batch);
  const double total = tree_.total();
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t slot = tree_.find(rng_.uniform() * total);
    out.refs.push_back({slot, serials_[slot]});
    out.transitions.push_back(&storage_[slot]);
    out.probabilities.push_back(tree_.get(slot) / total);
  }
  out.weights = importance_weights(out.refs);
  return out;
}

std::vector<double> ReplayBuffer::importance_weights(std::span<const ReplayRef> refs) const {
  std::vector<double> w(refs.size());
  const double total = tree_.total();
  const double n = static_cast<double>(config_.capacity);
  double sum = 0.0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const double p = tree_.get(refs[k].slot) / total;
    w[k] = std::pow(n * p, -beta_);
    sum += w[k];
  }
  for (double& x : w) x /= sum;
  return w;
}

void ReplayBuffer::update_priorities(std::span<const ReplayRef> refs, std::span<const double> abs_td_errors) {
  if (refs.size() != abs_td_errors.size()) fail(ErrorKind::Dimension, "one TD error per ref required");
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (!is_live(refs[k])) {
      ++stale_updates_;
      continue;
    }
    const double p = std::abs(abs_td_errors[k]) + config_.epsilon;
    if (!std::isfinite(p)) fail(ErrorKind::Numeric, "non-finite TD error");
    priorities_[refs[k].slot] = p;
    tree_.set(refs[k].slot, scaled(p));
    max_priority_ = std::max(max_priority_, p);
  }
}

void ReplayBuffer::anneal_beta() { beta_ = std::min(1.0, beta_ + config_.beta_step); }

}  // namespace gridattack
