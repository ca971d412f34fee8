#include <cmath>

#include "gridattack/errors.hpp"
#include "gridattack/trainer.hpp"

namespace gridattack {

void TrainConfig::check() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::Validation, what);
  };
  require(episodes >= 1, "episodes must be at least 1");
  require(batch >= 1, "batch size must be at least 1");
  require(update_period >= 1, "update period must be at least 1");
  require(xi > 0.0 && xi <= 1.0, "soft-update rate must lie in (0, 1]");
  require(phi >= 0.0 && std::isfinite(phi), "entropy temperature must be non-negative");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(grad_clip > 0.0, "gradient clip must be positive");
  require(memory >= batch, "replay memory must hold at least one batch");
  require(alpha >= 0.0, "alpha must be non-negative");
  require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
  require(beta_step >= 0.0, "beta step must be non-negative");
  require(epsilon > 0.0, "priority floor must be positive");
  require(dqn_epsilon_start >= 0.0 && dqn_epsilon_start <= 1.0 && dqn_epsilon_end >= 0.0 && dqn_epsilon_end <= 1.0,
          "exploration rates must lie in [0, 1]");
  require(dqn_epsilon_fraction > 0.0 && dqn_epsilon_fraction <= 1.0, "exploration decay fraction must lie in (0, 1]");
}

ReplayConfig TrainConfig::replay() const {
  ReplayConfig r;
  r.capacity = memory;
  r.alpha = alpha;
  r.beta = beta;
  r.beta_step = beta_step;
  r.epsilon = epsilon;
  return r;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"episodes", c.episodes},
       {"batch", c.batch},
       {"update_period", c.update_period},
       {"xi", c.xi},
       {"phi", c.phi},
       {"actor_lr", c.actor_lr},
       {"critic_lr", c.critic_lr},
       {"grad_clip", c.grad_clip},
       {"seed", c.seed},
       {"memory", c.memory},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"beta_step", c.beta_step},
       {"epsilon", c.epsilon},
       {"insertion_priority", c.insertion_priority == InsertionPriority::Computed ? "computed" : "max"},
       {"actor", c.actor},
       {"critic", c.critic},
       {"dqn_epsilon_start", c.dqn_epsilon_start},
       {"dqn_epsilon_end", c.dqn_epsilon_end},
       {"dqn_epsilon_fraction", c.dqn_epsilon_fraction},
       {"log_wall_time", c.log_wall_time}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.episodes = j.value("episodes", c.episodes);
  c.batch = j.value("batch", c.batch);
  c.update_period = j.value("update_period", c.update_period);
  c.xi = j.value("xi", c.xi);
  c.phi = j.value("phi", c.phi);
  c.actor_lr = j.value("actor_lr", c.actor_lr);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.memory = j.value("memory", c.memory);
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.beta_step = j.value("beta_step", c.beta_step);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("insertion_priority")) {
    const auto mode = j.at("insertion_priority").get<std::string>();
    if (mode == "computed") {
      c.insertion_priority = InsertionPriority::Computed;
    } else if (mode == "max") {
      c.insertion_priority = InsertionPriority::Max;
    } else {
      fail(ErrorKind::Validation, "insertion_priority must be \"computed\" or \"max\"");
    }
  }
  if (j.contains("actor")) j.at("actor").get_to(c.actor);
  if (j.contains("critic")) j.at("critic").get_to(c.critic);
  c.dqn_epsilon_start = j.value("dqn_epsilon_start", c.dqn_epsilon_start);
  c.dqn_epsilon_end = j.value("dqn_epsilon_end", c.dqn_epsilon_end);
  c.dqn_epsilon_fraction = j.value("dqn_epsilon_fraction", c.dqn_epsilon_fraction);
  c.log_wall_time = j.value("log_wall_time", c.log_wall_time);
}

GameConfig method_game(const std::string& method, const GameConfig& game) {
  GameConfig out = game;
  if (method == "maac") return out;
  if (method == "mass") {
    out.attackers = game.budget();
    out.stages = 1;
  } else if (method == "sams") {
    out.attackers = 1;
    out.stages = game.budget();
  } else {
    fail(ErrorKind::Validation, "unknown method \"" + method + "\" (expected maac, sams or mass)");
  }
  return out;
}

nn::Checkpoint make_checkpoint(const std::string& method, const GridCase& grid, const GameConfig& game,
                               const TrainConfig& config,
                               const std::vector<std::pair<std::string, nn::ParamRefs>>& groups) {
  nn::Checkpoint ckpt;
  const nlohmann::json effective = {{"game", game}, {"train", config}};
  ckpt.meta = {{"method", method},
               {"case", grid.name},
               {"n_lines", grid.num_lines()},
               {"attackers", game.attackers},
               {"stages", game.stages},
               {"config", effective}};
  ckpt.config_digest = nn::digest_hex(effective.dump());
  for (const auto& [prefix, params] : groups) ckpt.add(prefix, params);
  return ckpt;
}

}  // namespace gridattack
