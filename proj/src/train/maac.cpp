#include <chrono>
#include <cmath>

#include "gridattack/errors.hpp"
#include "gridattack/trainer.hpp"

namespace gridattack {

using nn::Matrix;

nn::Matrix observation_matrix(const std::vector<std::uint8_t>& states) {
  Matrix m(static_cast<Eigen::Index>(states.size()), 1);
  for (std::size_t l = 0; l < states.size(); ++l) m(static_cast<Eigen::Index>(l), 0) = states[l];
  return m;
}

nn::Critic::Input critic_input(const Matrix& obs, const std::vector<std::vector<LineId>>& actions) {
  nn::Critic::Input in;
  in.obs.assign(actions.size(), obs);
  in.actions = actions;
  return in;
}

Batch Batch::from_transitions(const std::vector<const Transition*>& transitions, std::size_t agents) {
  if (transitions.empty()) fail(ErrorKind::Dimension, "empty batch");
  const auto n = static_cast<Eigen::Index>(transitions.front()->obs.size());
  const auto b = static_cast<Eigen::Index>(transitions.size());
  Batch out;
  out.obs.resize(n, b);
  out.next_obs.resize(n, b);
  out.rewards.resize(static_cast<Eigen::Index>(agents), b);
  out.actions.assign(agents, std::vector<LineId>(transitions.size()));
  out.done.resize(transitions.size());
  out.weights.assign(transitions.size(), 1.0 / static_cast<double>(transitions.size()));
  for (Eigen::Index g = 0; g < b; ++g) {
    const Transition& t = *transitions[static_cast<std::size_t>(g)];
    if (static_cast<Eigen::Index>(t.obs.size()) != n || t.next_obs.size() != t.obs.size() ||
        t.actions.size() != agents || t.rewards.size() != agents) {
      fail(ErrorKind::Dimension, "transition does not match the batch layout");
    }
    for (Eigen::Index l = 0; l < n; ++l) {
      out.obs(l, g) = t.obs[static_cast<std::size_t>(l)];
      out.next_obs(l, g) = t.next_obs[static_cast<std::size_t>(l)];
    }
    for (std::size_t i = 0; i < agents; ++i) {
      out.actions[i][static_cast<std::size_t>(g)] = t.actions[i];
      out.rewards(static_cast<Eigen::Index>(i), g) = t.rewards[i];
    }
    out.done[static_cast<std::size_t>(g)] = t.done ? 1.0 : 0.0;
  }
  return out;
}

MaacModel MaacModel::create(Eigen::Index n_lines, std::size_t agents, const TrainConfig& config, Rng& rng) {
  MaacModel m;
  nn::ActorShape as = config.actor;
  as.n_lines = n_lines;
  for (std::size_t i = 0; i < agents; ++i) m.actors.emplace_back(as, rng);
  m.target_actors = m.actors;
  nn::CriticShape cs = config.critic;
  cs.n_lines = n_lines;
  cs.agents = agents;
  m.critic = nn::Critic(cs, rng);
  m.target_critic = m.critic;
  return m;
}

namespace {

std::vector<LineId> sample_columns(const Matrix& probs, Rng& rng) {
  std::vector<LineId> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index b = 0; b < probs.cols(); ++b) {
    out[static_cast<std::size_t>(b)] = rng.categorical(std::span<const double>(probs.col(b).data(), probs.rows()));
  }
  return out;
}

double column_entropy_mean(const Matrix& probs, const Matrix& logp) {
  return -(probs.cwiseProduct(logp)).sum() / static_cast<double>(probs.cols());
}

bool finite_params(const nn::ParamRefs& refs) {
  for (const auto& r : refs) {
    if (!r.value->allFinite()) return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<LineId>> sample_target_actions(const MaacModel& model, const Matrix& next_obs, Rng& rng) {
  std::vector<std::vector<LineId>> out;
  for (const auto& actor : model.target_actors) out.push_back(sample_columns(actor.probabilities(next_obs), rng));
  return out;
}

namespace {

Matrix targets_from(const MaacModel& model, const Batch& batch, double gamma, double phi,
                    const std::vector<std::vector<LineId>>& next_actions, const std::vector<Matrix>& next_logp) {
  const std::size_t k = model.agents();
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (next_actions.size() != k) fail(ErrorKind::Dimension, "one next-action set per agent required");
  const auto input = critic_input(batch.next_obs, next_actions);
  const auto outputs = model.target_critic.forward(input);
  const Matrix q = model.target_critic.taken_values(input, outputs);
  Matrix y = batch.rewards;
  for (std::size_t i = 0; i < k; ++i) {
    for (Eigen::Index g = 0; g < b; ++g) {
      const double keep = 1.0 - batch.done[static_cast<std::size_t>(g)];
      if (keep == 0.0) continue;
      const auto a = static_cast<Eigen::Index>(next_actions[i][static_cast<std::size_t>(g)]);
      const auto row = static_cast<Eigen::Index>(i);
      y(row, g) += gamma * keep * (-phi * next_logp[i](a, g) + q(row, g));
    }
  }
  return y;
}

std::vector<Matrix> target_log_policies(const MaacModel& model, const Matrix& next_obs) {
  std::vector<Matrix> logp;
  for (const auto& actor : model.target_actors) logp.push_back(nn::log_softmax_columns(actor.logits(next_obs)));
  return logp;
}

}  // namespace

Matrix compute_targets(const MaacModel& model, const Batch& batch, double gamma, double phi, Rng& rng) {
  const auto logp = target_log_policies(model, batch.next_obs);
  std::vector<std::vector<LineId>> next_actions;
  for (const auto& lp : logp) next_actions.push_back(sample_columns(lp.array().exp().matrix(), rng));
  return targets_from(model, batch, gamma, phi, next_actions, logp);
}

Matrix compute_targets(const MaacModel& model, const Batch& batch, double gamma, double phi,
                       const std::vector<std::vector<LineId>>& next_actions) {
  return targets_from(model, batch, gamma, phi, next_actions, target_log_policies(model, batch.next_obs));
}

namespace {

// Loss, TD errors and head-output gradients from a finished forward pass.
double weighted_regression(const nn::Critic& critic, const Batch& batch, const Matrix& q, const Matrix& targets,
                           const std::vector<double>& weights, std::vector<Matrix>* d_out) {
  const std::size_t k = critic.shape().agents;
  const std::size_t b = batch.size();
  if (weights.size() != b) fail(ErrorKind::Dimension, "one importance weight per transition required");
  const double inv_b = 1.0 / static_cast<double>(b);
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t g = 0; g < b; ++g) {
      const auto row = static_cast<Eigen::Index>(i), col = static_cast<Eigen::Index>(g);
      const double diff = q(row, col) - targets(row, col);
      loss += weights[g] * diff * diff;
      if (d_out) {
        const Eigen::Index out_row = critic.shape().per_action_head ? static_cast<Eigen::Index>(batch.actions[i][g]) : 0;
        (*d_out)[i](out_row, col) = 2.0 * weights[g] * diff * inv_b;
      }
    }
  }
  return loss * inv_b;
}

std::vector<double> td_errors(const Matrix& q, const Matrix& targets) {
  const Eigen::RowVectorXd sums = (q - targets).cwiseAbs().colwise().sum();
  return std::vector<double>(sums.data(), sums.data() + sums.size());
}

}  // namespace

double critic_loss(const nn::Critic& critic, const Batch& batch, const Matrix& targets,
                   const std::vector<double>& weights, LossReport* report, nn::Critic* grad) {
  const std::size_t k = critic.shape().agents;
  if (targets.rows() != static_cast<Eigen::Index>(k) || targets.cols() != static_cast<Eigen::Index>(batch.size())) {
    fail(ErrorKind::Dimension, "targets must be agents x batch");
  }
  const auto input = critic_input(batch.obs, batch.actions);
  nn::Critic::Cache cache;
  const auto outputs = critic.forward(input, grad ? &cache : nullptr);
  const Matrix q = critic.taken_values(input, outputs);
  std::vector<Matrix> d_out;
  for (std::size_t i = 0; grad && i < k; ++i) d_out.push_back(Matrix::Zero(outputs[i].rows(), outputs[i].cols()));
  const double loss = weighted_regression(critic, batch, q, targets, weights, grad ? &d_out : nullptr);
  if (grad) critic.backward(input, cache, d_out, *grad);
  if (report) {
    report->critic_loss = loss;
    report->td_errors = td_errors(q, targets);
    report->targets = targets;
    report->q_values = q;
  }
  return loss;
}

namespace {

void advantages_from(const MaacModel& model, const Matrix& obs, const std::vector<std::vector<LineId>>& actions,
                     double phi, const std::vector<Matrix>& logp, LossReport& report) {
  const std::size_t k = model.agents();
  const Eigen::Index b = obs.cols();
  const auto input = critic_input(obs, actions);
  const auto outputs = model.critic.forward(input);
  report.advantages.resize(static_cast<Eigen::Index>(k), b);
  report.baselines.resize(static_cast<Eigen::Index>(k), b);
  report.entropy.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const Matrix q_all = model.critic.action_values(input, i, outputs);
    const Matrix p = logp[i].array().exp().matrix();
    report.entropy[i] = column_entropy_mean(p, logp[i]);
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index g = 0; g < b; ++g) {
      const auto a = static_cast<Eigen::Index>(actions[i][static_cast<std::size_t>(g)]);
      const double d = p.col(g).dot(q_all.col(g));
      report.baselines(row, g) = d;
      report.advantages(row, g) = -phi * logp[i](a, g) + q_all(a, g) - d;
    }
  }
}

// Gradient of -(1/B) sum_b rho_b log softmax(logits)_{a_b} with respect to the
// logits: -(rho_b / B) (onehot(a_b) - p_b).
Matrix surrogate_dlogits(const Matrix& logp, const std::vector<LineId>& actions, const Eigen::RowVectorXd& rho) {
  const Eigen::Index b = logp.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix dlogits = logp.array().exp().matrix();
  for (Eigen::Index g = 0; g < b; ++g) {
    dlogits(static_cast<Eigen::Index>(actions[static_cast<std::size_t>(g)]), g) -= 1.0;
    dlogits.col(g) *= rho(g) * inv_b;
  }
  return dlogits;
}

double surrogate_value(const Matrix& logp, const std::vector<LineId>& actions, const Eigen::RowVectorXd& rho) {
  double loss = 0.0;
  for (Eigen::Index g = 0; g < logp.cols(); ++g) {
    loss -= rho(g) * logp(static_cast<Eigen::Index>(actions[static_cast<std::size_t>(g)]), g);
  }
  return loss / static_cast<double>(logp.cols());
}

}  // namespace

void compute_advantages(const MaacModel& model, const Matrix& obs, const std::vector<std::vector<LineId>>& actions,
                        double phi, LossReport& report) {
  std::vector<Matrix> logp;
  for (const auto& actor : model.actors) logp.push_back(nn::log_softmax_columns(actor.logits(obs)));
  advantages_from(model, obs, actions, phi, logp, report);
}

double actor_surrogate(const nn::Actor& actor, const Matrix& obs, const std::vector<LineId>& actions,
                       const Eigen::RowVectorXd& rho, nn::Actor* grad) {
  const Eigen::Index b = obs.cols();
  if (static_cast<Eigen::Index>(actions.size()) != b || rho.size() != b) {
    fail(ErrorKind::Dimension, "actions and advantages must match the batch");
  }
  nn::Actor::Cache cache;
  const Matrix logp = nn::log_softmax_columns(actor.logits(obs, grad ? &cache : nullptr));
  if (grad) actor.backward(cache, surrogate_dlogits(logp, actions, rho), *grad);
  return surrogate_value(logp, actions, rho);
}

MaacLearner::MaacLearner(MaacModel m, const TrainConfig& cfg, Rng r)
    : model(std::move(m)), critic_opt(cfg.critic_lr), config(cfg), rng(r) {
  for (std::size_t i = 0; i < model.agents(); ++i) actor_opt.emplace_back(cfg.actor_lr);
}

LossReport MaacLearner::critic_update(const Batch& batch, const Matrix& targets) {
  return critic_update(batch, targets, [&](const std::vector<double>&) { return batch.weights; });
}

LossReport MaacLearner::critic_update(const Batch& batch, const Matrix& targets, const Reweight& reweight) {
  const std::size_t k = model.agents();
  if (targets.rows() != static_cast<Eigen::Index>(k) || targets.cols() != static_cast<Eigen::Index>(batch.size())) {
    fail(ErrorKind::Dimension, "targets must be agents x batch");
  }
  const auto input = critic_input(batch.obs, batch.actions);
  nn::Critic::Cache cache;
  const auto outputs = model.critic.forward(input, &cache);
  LossReport report;
  report.q_values = model.critic.taken_values(input, outputs);
  report.targets = targets;
  report.td_errors = td_errors(report.q_values, targets);
  const std::vector<double> weights = reweight(report.td_errors);
  std::vector<Matrix> d_out;
  for (std::size_t i = 0; i < k; ++i) d_out.push_back(Matrix::Zero(outputs[i].rows(), outputs[i].cols()));
  report.critic_loss = weighted_regression(model.critic, batch, report.q_values, targets, weights, &d_out);
  nn::Critic grad = model.critic.zeros_like();
  model.critic.backward(input, cache, d_out, grad);
  const auto grads = grad.params();
  if (!std::isfinite(report.critic_loss) || !finite_params(grads)) {
    fail(ErrorKind::Numeric, "critic loss or gradient is not finite");
  }
  nn::clip_global_norm(grads, config.grad_clip);
  critic_opt.step(model.critic.params(), grads);
  return report;
}

LossReport MaacLearner::actor_update(const Matrix& obs) {
  const std::size_t k = model.agents();
  std::vector<nn::Actor::Cache> caches(k);
  std::vector<Matrix> logp;
  std::vector<std::vector<LineId>> actions;
  for (std::size_t i = 0; i < k; ++i) {
    logp.push_back(nn::log_softmax_columns(model.actors[i].logits(obs, &caches[i])));
    actions.push_back(sample_columns(logp.back().array().exp().matrix(), rng));
  }
  LossReport report;
  advantages_from(model, obs, actions, config.phi, logp, report);
  std::vector<nn::Actor> grads;
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::RowVectorXd rho = report.advantages.row(static_cast<Eigen::Index>(i));
    grads.push_back(model.actors[i].zeros_like());
    model.actors[i].backward(caches[i], surrogate_dlogits(logp[i], actions[i], rho), grads[i]);
    if (!std::isfinite(surrogate_value(logp[i], actions[i], rho)) || !finite_params(grads[i].params())) {
      fail(ErrorKind::Numeric, "actor " + std::to_string(i) + " surrogate or gradient is not finite");
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto g = grads[i].params();
    nn::clip_global_norm(g, config.grad_clip);
    actor_opt[i].step(model.actors[i].params(), g);
  }
  return report;
}

void MaacLearner::soft_update_targets() {
  for (std::size_t i = 0; i < model.agents(); ++i) {
    nn::soft_update(model.target_actors[i].params(), model.actors[i].params(), config.xi);
  }
  nn::soft_update(model.target_critic.params(), model.critic.params(), config.xi);
}

nlohmann::json episode_log_json(const EpisodeLog& log, bool with_wall_time) {
  nlohmann::json j = {{"episode", log.episode},
                      {"return", log.ret},
                      {"loss_mw", log.loss_mw},
                      {"critic_loss", log.critic_loss ? nlohmann::json(*log.critic_loss) : nlohmann::json(nullptr)},
                      {"entropy", log.entropy},
                      {"beta", log.beta}};
  if (with_wall_time) j["wall_ms"] = log.wall_ms;
  return j;
}

namespace {

std::vector<std::pair<std::string, nn::ParamRefs>> maac_groups(MaacModel& model) {
  std::vector<std::pair<std::string, nn::ParamRefs>> groups;
  for (std::size_t i = 0; i < model.agents(); ++i) {
    groups.emplace_back("actor" + std::to_string(i) + ".", model.actors[i].params());
  }
  groups.emplace_back("critic.", model.critic.params());
  for (std::size_t i = 0; i < model.agents(); ++i) {
    groups.emplace_back("target_actor" + std::to_string(i) + ".", model.target_actors[i].params());
  }
  groups.emplace_back("target_critic.", model.target_critic.params());
  return groups;
}

}  // namespace

TrainOutput train_maac(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& config,
                       const TrainHooks& hooks) {
  config.check();
  game.check();
  const std::size_t k = game.attackers;
  const auto n = static_cast<Eigen::Index>(grid->num_lines());

  Rng master(config.seed);
  Rng init_rng = master.split();
  Rng act_rng = master.split();
  MaacLearner learner(MaacModel::create(n, k, config, init_rng), config, master.split());
  ReplayConfig rc = config.replay();
  rc.seed = master.next_u64();
  ReplayBuffer replay(rc);
  AttackEnv env(grid, game);

  const std::string& method = hooks.method;
  TrainConfig effective = config;
  effective.actor.n_lines = n;
  effective.critic.n_lines = n;
  effective.critic.agents = k;
  TrainOutput out;
  auto checkpoint = [&] { return make_checkpoint(method, *grid, game, effective, maac_groups(learner.model)); };

  const auto start = std::chrono::steady_clock::now();
  std::size_t env_steps = 0;
  try {
    for (std::size_t z = 0; z < config.episodes; ++z) {
      EpisodeLog log;
      log.episode = z;
      double critic_sum = 0.0, entropy_sum = 0.0;
      Observation obs = env.reset();
      for (std::size_t t = 0; t < game.stages; ++t) {
        const Matrix o = observation_matrix(obs.shared().values());
        JointAction actions(k);
        for (std::size_t i = 0; i < k; ++i) {
          const Matrix logp = nn::log_softmax_columns(learner.model.actors[i].logits(o));
          const Matrix p = logp.array().exp().matrix();
          entropy_sum += column_entropy_mean(p, logp);
          actions[i] = act_rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.rows())));
        }
        StepResult step = env.step(actions);
        Transition tr{obs.shared().values(), actions, step.observation.shared().values(), step.reward.per_agent,
                      step.done};
        log.ret += step.reward.per_agent.front();
        log.loss_mw += step.reward.stage_loss_mw;

        double priority = replay.max_priority();
        if (config.insertion_priority == InsertionPriority::Computed) {
          const Batch one = Batch::from_transitions({&tr}, k);
          const Matrix y = compute_targets(learner.model, one, game.gamma, config.phi, learner.rng);
          LossReport r;
          critic_loss(learner.model.critic, one, y, {1.0}, &r);
          priority = r.td_errors.front() + config.epsilon;
        }
        replay.insert(std::move(tr), priority);
        obs = std::move(step.observation);
        ++env_steps;

        if (replay.size() >= k * config.batch && env_steps % config.update_period == 0) {
          ReplaySample sample = replay.sample(config.batch);
          Batch batch = Batch::from_transitions(sample.transitions, k);
          const Matrix y = compute_targets(learner.model, batch, game.gamma, config.phi, learner.rng);
          // Priorities are refreshed from the TD errors before the IS
          // weights of this step are formed.
          const LossReport critic_report = learner.critic_update(batch, y, [&](const std::vector<double>& td) {
            replay.update_priorities(sample.refs, td);
            return replay.importance_weights(sample.refs);
          });
          learner.actor_update(batch.obs);
          learner.soft_update_targets();
          replay.anneal_beta();
          critic_sum += critic_report.critic_loss;
          ++log.updates;
          ++out.updates;
        }
      }
      if (log.updates > 0) log.critic_loss = critic_sum / static_cast<double>(log.updates);
      log.entropy = entropy_sum / static_cast<double>(game.stages * k);
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
  out.stale_priority_updates = replay.stale_updates();
  out.checkpoint = checkpoint();
  out.checkpoint.meta["updates"] = out.updates;
  if (!hooks.checkpoint_path.empty()) out.checkpoint.save(hooks.checkpoint_path);
  return out;
}

}  // namespace gridattack
