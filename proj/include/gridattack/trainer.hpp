#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridattack/attack_env.hpp"
#include "gridattack/nn/actor.hpp"
#include "gridattack/nn/checkpoint.hpp"
#include "gridattack/nn/critic.hpp"
#include "gridattack/nn/optim.hpp"
#include "gridattack/replay.hpp"

namespace gridattack {

enum class InsertionPriority { Computed, Max };

struct TrainConfig {
  std::size_t episodes = 100000;  // Z
  std::size_t batch = 128;        // B_size
  std::size_t update_period = 100;  // T_update, in environment steps
  double xi = 0.01;     // soft-update rate
  double phi = 0.05;    // entropy temperature
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  std::size_t memory = 15000;  // N_m
  double alpha = 0.6;
  double beta = 0.4;
  double beta_step = 0.001;
  double epsilon = 1e-6;
  InsertionPriority insertion_priority = InsertionPriority::Computed;

  nn::ActorShape actor;    // n_lines filled from the case
  nn::CriticShape critic;  // n_lines and agents filled from the game

  // Single-agent value-learning baseline only.
  double dqn_epsilon_start = 1.0;
  double dqn_epsilon_end = 0.05;
  double dqn_epsilon_fraction = 0.5;  // share of episodes over which epsilon decays

  /// Include wall-clock milliseconds in log records.
  bool log_wall_time = true;

  void check() const;
  ReplayConfig replay() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Online and target networks of the multi-agent method.
struct MaacModel {
  std::vector<nn::Actor> actors, target_actors;
  nn::Critic critic, target_critic;

  static MaacModel create(Eigen::Index n_lines, std::size_t agents, const TrainConfig& config, Rng& rng);
  std::size_t agents() const noexcept { return actors.size(); }
};

/// Replay batch in network layout. Observations are shared by all agents.
struct Batch {
  nn::Matrix obs, next_obs;                  // n_lines x B
  std::vector<std::vector<LineId>> actions;  // per agent, B entries
  nn::Matrix rewards;                        // agents x B
  std::vector<double> done;                  // 1 for terminal transitions
  std::vector<double> weights;               // IS weights

  std::size_t size() const noexcept { return done.size(); }
  static Batch from_transitions(const std::vector<const Transition*>& transitions, std::size_t agents);
};

nn::Matrix observation_matrix(const std::vector<std::uint8_t>& states);
nn::Critic::Input critic_input(const nn::Matrix& obs, const std::vector<std::vector<LineId>>& actions);

struct LossReport {
  double critic_loss = 0.0;
  std::vector<double> td_errors;  // delta_g = sum_i |y_i - Q_i|
  nn::Matrix targets;             // y, agents x B
  nn::Matrix q_values;            // Q at taken actions, agents x B
  nn::Matrix advantages;          // rho, agents x B (actor step)
  nn::Matrix baselines;           // d, agents x B (actor step)
  std::vector<double> entropy;    // mean policy entropy per agent
};

/// Actions drawn once from the target policies at next_obs.
std::vector<std::vector<LineId>> sample_target_actions(const MaacModel& model, const nn::Matrix& next_obs, Rng& rng);

/// y_i = r_i + gamma (1 - done) (-phi log pi_target_i(a~_i|o~) + Q_target_i(o~, a~)).
nn::Matrix compute_targets(const MaacModel& model, const Batch& batch, double gamma, double phi, Rng& rng);
nn::Matrix compute_targets(const MaacModel& model, const Batch& batch, double gamma, double phi,
                           const std::vector<std::vector<LineId>>& next_actions);

/// Weighted regression loss sum_i sum_g w_g (Q_i - y_i)^2 / B. Fills
/// td_errors and q_values. When grad is given, accumulates dL/dpsi.
double critic_loss(const nn::Critic& critic, const Batch& batch, const nn::Matrix& targets,
                   const std::vector<double>& weights, LossReport* report = nullptr, nn::Critic* grad = nullptr);

/// rho_i = -phi log pi_i(a_i|o) + Q_i(o, a) - sum_a' pi_i(a'|o) Q_i(o, (a', a_-i)) for every agent.
void compute_advantages(const MaacModel& model, const nn::Matrix& obs, const std::vector<std::vector<LineId>>& actions,
                        double phi, LossReport& report);

/// Score-function surrogate -(1/B) sum_b rho_b log pi(a_b|o_b) with rho held
/// fixed. When grad is given, accumulates d/dtheta.
double actor_surrogate(const nn::Actor& actor, const nn::Matrix& obs, const std::vector<LineId>& actions,
                       const Eigen::RowVectorXd& rho, nn::Actor* grad = nullptr);

/// Optimizers and random stream shared across update steps.
struct MaacLearner {
  MaacModel model;
  std::vector<nn::Adam> actor_opt;
  nn::Adam critic_opt;
  TrainConfig config;
  Rng rng;

  MaacLearner(MaacModel model, const TrainConfig& config, Rng rng);

  /// One gradient step on the critic. Throws Error{Numeric} and leaves the
  /// parameters untouched on a non-finite loss or gradient.
  LossReport critic_update(const Batch& batch, const nn::Matrix& targets);
  /// As above, with the weights computed from this step's TD errors.
  using Reweight = std::function<std::vector<double>(const std::vector<double>& td_errors)>;
  LossReport critic_update(const Batch& batch, const nn::Matrix& targets, const Reweight& reweight);
  /// One gradient step on every actor with actions from the current policies.
  LossReport actor_update(const nn::Matrix& obs);
  void soft_update_targets();
};

/// Per-episode training record.
struct EpisodeLog {
  std::size_t episode = 0;
  double ret = 0.0;
  double loss_mw = 0.0;
  std::optional<double> critic_loss;
  double entropy = 0.0;
  double beta = 0.0;
  double wall_ms = 0.0;
  std::size_t updates = 0;
};

nlohmann::json episode_log_json(const EpisodeLog& log, bool with_wall_time);

struct TrainOutput {
  std::vector<EpisodeLog> log;
  std::size_t updates = 0;
  std::size_t stale_priority_updates = 0;
  nn::Checkpoint checkpoint;
};

struct TrainHooks {
  /// Called after every episode; used to stream the log.
  std::function<void(const EpisodeLog&)> on_episode;
  /// When set, the checkpoint is saved here at the end or on failure.
  std::string checkpoint_path;
  /// Method name recorded in the checkpoint metadata.
  std::string method = "maac";
};

/// Multi-agent attention actor-critic with prioritized replay.
TrainOutput train_maac(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& config,
                       const TrainHooks& hooks = {});

/// Single-agent multistage baseline: value learning with uniform replay,
/// target network and epsilon-greedy exploration. K = 1, M = budget.
TrainOutput train_dqn(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& config,
                      const TrainHooks& hooks = {});

/// Game geometry used by each training method for a given attack budget.
GameConfig method_game(const std::string& method, const GameConfig& game);

/// Checkpoint layout shared by training and execution.
nn::Checkpoint make_checkpoint(const std::string& method, const GridCase& grid, const GameConfig& game,
                               const TrainConfig& config,
                               const std::vector<std::pair<std::string, nn::ParamRefs>>& groups);

}  // namespace gridattack
