#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "gridattack/cascade.hpp"
#include "gridattack/grid.hpp"

namespace gridattack {

struct GameConfig {
  std::size_t attackers = 3;  // K
  std::size_t stages = 3;     // M
  DefenseSet defense;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  CascadeOptions cascade;

  std::size_t budget() const noexcept { return attackers * stages; }
  void check() const;
};

void to_json(nlohmann::json& j, const GameConfig& g);
void from_json(const nlohmann::json& j, GameConfig& g);

/// Identical line-state view handed to every attacker.
struct Observation {
  std::vector<LineStateVector> per_agent;

  const LineStateVector& shared() const { return per_agent.front(); }
};

using JointAction = std::vector<LineId>;

struct RewardVector {
  std::vector<double> per_agent;  // L_t / L_total for every agent
  double stage_loss_mw = 0.0;
  double total_generation_mw = 0.0;
};

struct StepResult {
  Observation observation;
  RewardVector reward;
  bool done = false;
  CascadeResult cascade;
};

/// Episodic multi-attacker game over one grid. Dynamics are deterministic.
class AttackEnv {
 public:
  AttackEnv(std::shared_ptr<const GridCase> grid, GameConfig config);

  Observation reset();
  StepResult step(const JointAction& actions);

  const GridCase& grid() const noexcept { return *grid_; }
  const GameConfig& config() const noexcept { return config_; }
  std::size_t num_lines() const noexcept { return grid_->num_lines(); }
  std::size_t stage() const noexcept { return stage_; }
  bool done() const noexcept { return stage_ >= config_.stages; }

  const LineStateVector& line_states() const noexcept { return states_; }
  const Dispatch& dispatch() const noexcept { return dispatch_; }
  double initial_generation() const noexcept { return initial_generation_; }
  double served_generation() const { return dispatch_.served_generation(); }

  /// Set the defense for subsequent episodes.
  void set_defense(DefenseSet defense);

 private:
  Observation observe() const;

  std::shared_ptr<const GridCase> grid_;
  GameConfig config_;
  LineStateVector states_;
  Dispatch dispatch_;
  double initial_generation_ = 0.0;
  std::size_t stage_ = 0;
  bool started_ = false;
};

/// One line of an episode trace file.
nlohmann::json episode_record(std::size_t episode, std::size_t stage, const JointAction& actions,
                              const StepResult& step);

}  // namespace gridattack
