#include "gridattack/attack_env.hpp"

#include <algorithm>

#include "gridattack/errors.hpp"

namespace gridattack {

void GameConfig::check() const {
  if (attackers < 1) fail(ErrorKind::Validation, "need at least one attacker");
  if (stages < 1) fail(ErrorKind::Validation, "need at least one stage");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::Validation, "gamma must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const GameConfig& g) {
  j = {{"attackers", g.attackers},
       {"stages", g.stages},
       {"defense", g.defense.lines()},
       {"gamma", g.gamma},
       {"seed", g.seed},
       {"overload_tolerance", g.cascade.overload_tolerance},
       {"max_rounds", g.cascade.max_rounds},
       {"enforce_ramp_limits", g.cascade.enforce_ramp_limits}};
}

void from_json(const nlohmann::json& j, GameConfig& g) {
  g.attackers = j.value("attackers", g.attackers);
  g.stages = j.value("stages", g.stages);
  if (j.contains("defense")) g.defense = DefenseSet(j.at("defense").get<std::vector<LineId>>());
  g.gamma = j.value("gamma", g.gamma);
  g.seed = j.value("seed", g.seed);
  g.cascade.overload_tolerance = j.value("overload_tolerance", g.cascade.overload_tolerance);
  g.cascade.max_rounds = j.value("max_rounds", g.cascade.max_rounds);
  g.cascade.enforce_ramp_limits = j.value("enforce_ramp_limits", g.cascade.enforce_ramp_limits);
}

AttackEnv::AttackEnv(std::shared_ptr<const GridCase> grid, GameConfig config)
    : grid_(std::move(grid)), config_(std::move(config)) {
  if (!grid_) fail(ErrorKind::Validation, "environment needs a case");
  config_.check();
  config_.defense.check(grid_->num_lines());
  reset();
  started_ = false;
}

void AttackEnv::set_defense(DefenseSet defense) {
  defense.check(grid_->num_lines());
  config_.defense = std::move(defense);
}

Observation AttackEnv::reset() {
  states_ = LineStateVector::all_in_service(grid_->num_lines());
  dispatch_ = Dispatch::base(*grid_);
  initial_generation_ = dispatch_.served_generation();
  stage_ = 0;
  started_ = true;
  return observe();
}

Observation AttackEnv::observe() const {
  Observation obs;
  obs.per_agent.assign(config_.attackers, states_);
  return obs;
}

StepResult AttackEnv::step(const JointAction& actions) {
  if (!started_) fail(ErrorKind::State, "step before reset");
  if (done()) fail(ErrorKind::State, "step after the final stage");
  if (actions.size() != config_.attackers) {
    fail(ErrorKind::Dimension, "expected " + std::to_string(config_.attackers) + " actions, got " +
                                   std::to_string(actions.size()));
  }
  std::vector<AttackAction> attack(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) attack[i] = AttackAction{actions[i], i};

  const auto attacked = apply_attacks(states_, attack, config_.defense);
  StepResult out;
  out.cascade = run_cascade(*grid_, attacked, dispatch_, config_.cascade);
  states_ = out.cascade.next_states;
  dispatch_ = out.cascade.dispatch;
  ++stage_;

  const double fraction = initial_generation_ > 0.0 ? out.cascade.generation_loss / initial_generation_ : 0.0;
  out.reward.per_agent.assign(config_.attackers, std::clamp(fraction, 0.0, 1.0));
  out.reward.stage_loss_mw = out.cascade.generation_loss;
  out.reward.total_generation_mw = initial_generation_;
  out.done = done();
  out.observation = observe();
  return out;
}

nlohmann::json episode_record(std::size_t episode, std::size_t stage, const JointAction& actions,
                              const StepResult& step) {
  std::vector<LineId> tripped;
  for (const auto& round : step.cascade.trip_trace) tripped.insert(tripped.end(), round.tripped.begin(), round.tripped.end());
  return {{"episode", episode},
          {"stage", stage},
          {"joint_action", actions},
          {"reward", step.reward.per_agent.empty() ? 0.0 : step.reward.per_agent.front()},
          {"loss_mw", step.reward.stage_loss_mw},
          {"tripped_lines", tripped}};
}

}  // namespace gridattack
