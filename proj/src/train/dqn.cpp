#include <algorithm>
#include <chrono>
#include <cmath>

#include "gridattack/errors.hpp"
#include "gridattack/trainer.hpp"

namespace gridattack {

using nn::Matrix;

namespace {

std::size_t argmax_column(const Matrix& values, Eigen::Index col) {
  Eigen::Index best = 0;
  values.col(col).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

// Entropy of the epsilon-greedy distribution over n actions.
double greedy_entropy(double eps, std::size_t n) {
  const double other = eps / static_cast<double>(n);
  const double top = 1.0 - eps + other;
  double h = -top * std::log(top);
  if (other > 0.0) h -= static_cast<double>(n - 1) * other * std::log(other);
  return h;
}

}  // namespace

TrainOutput train_dqn(std::shared_ptr<const GridCase> grid, const GameConfig& game_in, const TrainConfig& config,
                      const TrainHooks& hooks) {
  config.check();
  const GameConfig game = method_game("sams", game_in);
  game.check();
  const std::size_t n = grid->num_lines();

  Rng master(config.seed);
  Rng init_rng = master.split();
  Rng act_rng = master.split();
  nn::ActorShape shape = config.actor;
  shape.n_lines = static_cast<Eigen::Index>(n);
  nn::Actor q_net(shape, init_rng);
  nn::Actor target = q_net;
  nn::Adam opt(config.critic_lr);

  ReplayConfig rc = config.replay();
  rc.alpha = 0.0;  // uniform replay
  rc.beta = 0.0;
  rc.beta_step = 0.0;
  rc.seed = master.next_u64();
  ReplayBuffer replay(rc);
  AttackEnv env(grid, game);

  TrainConfig effective = config;
  effective.actor.n_lines = shape.n_lines;
  TrainOutput out;
  auto checkpoint = [&] {
    return make_checkpoint("sams", *grid, game, effective, {{"qnet.", q_net.params()}, {"target_qnet.", target.params()}});
  };

  const double decay_episodes = std::max(1.0, config.dqn_epsilon_fraction * static_cast<double>(config.episodes));
  const auto start = std::chrono::steady_clock::now();
  std::size_t env_steps = 0;
  try {
    for (std::size_t z = 0; z < config.episodes; ++z) {
      const double progress = std::min(1.0, static_cast<double>(z) / decay_episodes);
      const double eps = config.dqn_epsilon_start + (config.dqn_epsilon_end - config.dqn_epsilon_start) * progress;
      EpisodeLog log;
      log.episode = z;
      double loss_sum = 0.0;
      Observation obs = env.reset();
      for (std::size_t t = 0; t < game.stages; ++t) {
        LineId action;
        if (act_rng.uniform() < eps) {
          action = act_rng.index(n);
        } else {
          action = argmax_column(q_net.logits(observation_matrix(obs.shared().values())), 0);
        }
        StepResult step = env.step({action});
        log.ret += step.reward.per_agent.front();
        log.loss_mw += step.reward.stage_loss_mw;
        replay.insert({obs.shared().values(), {action}, step.observation.shared().values(), step.reward.per_agent,
                       step.done},
                      1.0);
        obs = std::move(step.observation);
        ++env_steps;

        if (replay.size() >= config.batch && env_steps % config.update_period == 0) {
          const ReplaySample sample = replay.sample(config.batch);
          const Batch batch = Batch::from_transitions(sample.transitions, 1);
          const auto b = static_cast<Eigen::Index>(batch.size());
          const Matrix next_q = target.logits(batch.next_obs);
          nn::Actor::Cache cache;
          const Matrix q = q_net.logits(batch.obs, &cache);
          Matrix dq = Matrix::Zero(q.rows(), q.cols());
          double loss = 0.0;
          for (Eigen::Index g = 0; g < b; ++g) {
            const double keep = 1.0 - batch.done[static_cast<std::size_t>(g)];
            const double y = batch.rewards(0, g) + game.gamma * keep * next_q.col(g).maxCoeff();
            const auto a = static_cast<Eigen::Index>(batch.actions[0][static_cast<std::size_t>(g)]);
            const double diff = q(a, g) - y;
            loss += diff * diff / static_cast<double>(b);
            dq(a, g) = 2.0 * diff / static_cast<double>(b);
          }
          nn::Actor grad = q_net.zeros_like();
          q_net.backward(cache, dq, grad);
          const auto grads = grad.params();
          if (!std::isfinite(loss)) fail(ErrorKind::Numeric, "value loss is not finite");
          nn::clip_global_norm(grads, config.grad_clip);
          opt.step(q_net.params(), grads);
          nn::soft_update(target.params(), q_net.params(), config.xi);
          loss_sum += loss;
          ++log.updates;
          ++out.updates;
        }
      }
      if (log.updates > 0) log.critic_loss = loss_sum / static_cast<double>(log.updates);
      log.entropy = greedy_entropy(eps, n);
      log.beta = replay.beta();
      log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (hooks.on_episode) hooks.on_episode(log);
      out.log.push_back(log);
    }
  } catch (const std::exception& e) {
    if (!hooks.checkpoint_path.empty()) {
      nn::Checkpoint ckpt = checkpoint();
      ckpt.meta["failure"] = e.what();
      ckpt.save(hooks.checkpoint_path);
    }
    throw;
  }
  out.checkpoint = checkpoint();
  out.checkpoint.meta["updates"] = out.updates;
  if (!hooks.checkpoint_path.empty()) out.checkpoint.save(hooks.checkpoint_path);
  return out;
}

}  // namespace gridattack
