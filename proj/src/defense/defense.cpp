#include "gridattack/defense.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "gridattack/errors.hpp"

namespace gridattack {

TrainedAttacker TrainedAttacker::from_checkpoint(const nn::Checkpoint& ckpt) {
  TrainedAttacker out;
  try {
    out.method_ = ckpt.meta.at("method").get<std::string>();
    out.attackers_ = ckpt.meta.at("attackers").get<std::size_t>();
    out.stages_ = ckpt.meta.at("stages").get<std::size_t>();
    out.n_lines_ = ckpt.meta.at("n_lines").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Compatibility, std::string("checkpoint metadata incomplete: ") + e.what());
  }
  nn::ActorShape shape;
  ckpt.meta.at("config").at("train").at("actor").get_to(shape);
  shape.n_lines = static_cast<Eigen::Index>(out.n_lines_);
  if (out.method_ == "sams") {
    if (out.attackers_ != 1) fail(ErrorKind::Compatibility, "single-agent checkpoint with several attackers");
    out.networks_.emplace_back(shape);
    ckpt.load_into("qnet.", out.networks_.back().params());
  } else {
    for (std::size_t i = 0; i < out.attackers_; ++i) {
      out.networks_.emplace_back(shape);
      ckpt.load_into("actor" + std::to_string(i) + ".", out.networks_.back().params());
    }
  }
  return out;
}

JointAction TrainedAttacker::greedy(const LineStateVector& observation) const {
  if (observation.size() != n_lines_) fail(ErrorKind::Dimension, "observation length does not match the checkpoint");
  const nn::Matrix o = observation_matrix(observation.values());
  JointAction actions;
  for (const auto& net : networks_) {
    Eigen::Index best = 0;
    net.logits(o).col(0).maxCoeff(&best);
    actions.push_back(static_cast<LineId>(best));
  }
  return actions;
}

AttackSequence execute(const TrainedAttacker& attacker, AttackEnv& env, std::size_t experiment) {
  if (env.num_lines() != attacker.num_lines()) {
    fail(ErrorKind::Compatibility, "checkpoint trained on " + std::to_string(attacker.num_lines()) + " lines, case has " +
                                       std::to_string(env.num_lines()));
  }
  if (env.config().attackers != attacker.attackers() || env.config().stages != attacker.stages()) {
    fail(ErrorKind::Compatibility, "checkpoint trained for K=" + std::to_string(attacker.attackers()) +
                                       ", M=" + std::to_string(attacker.stages()));
  }
  AttackSequence seq;
  seq.experiment = experiment;
  seq.lines.assign(attacker.attackers(), {});
  Observation obs = env.reset();
  while (!env.done()) {
    const JointAction a = attacker.greedy(obs.shared());
    for (std::size_t i = 0; i < a.size(); ++i) seq.lines[i].push_back(a[i]);
    StepResult step = env.step(a);
    seq.stage_loss_mw.push_back(step.reward.stage_loss_mw);
    seq.loss_mw += step.reward.stage_loss_mw;
    obs = std::move(step.observation);
  }
  return seq;
}

FrequencyTable aggregate_frequencies(std::span<const AttackSequence> sequences, std::size_t n_lines) {
  FrequencyTable t;
  t.counts.assign(n_lines, 0);
  t.h = sequences.size();
  for (const auto& seq : sequences) {
    std::vector<bool> seen(n_lines, false);
    for (const auto& stages : seq.lines) {
      for (LineId l : stages) {
        if (l >= n_lines) fail(ErrorKind::Domain, "attacked line " + std::to_string(l) + " out of range");
        seen[l] = true;
      }
    }
    for (std::size_t l = 0; l < n_lines; ++l) t.counts[l] += seen[l] ? 1 : 0;
  }
  t.frequencies.resize(n_lines);
  for (std::size_t l = 0; l < n_lines; ++l) {
    t.frequencies[l] = t.h ? static_cast<double>(t.counts[l]) / static_cast<double>(t.h) : 0.0;
  }
  return t;
}

double stability_distance(std::span<const double> previous, std::span<const double> current) {
  if (previous.size() != current.size()) fail(ErrorKind::Dimension, "frequency vectors differ in length");
  double sum = 0.0;
  for (std::size_t l = 0; l < previous.size(); ++l) {
    const double d = previous[l] - current[l];
    sum += d * d;
  }
  return std::sqrt(sum);
}

DefensePlan select_defense(const FrequencyTable& table, std::size_t w) {
  const std::size_t n = table.frequencies.size();
  if (w > n) fail(ErrorKind::Domain, "cannot protect " + std::to_string(w) + " of " + std::to_string(n) + " lines");
  std::vector<LineId> order(n);
  std::iota(order.begin(), order.end(), LineId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](LineId a, LineId b) { return table.frequencies[a] > table.frequencies[b]; });
  DefensePlan plan;
  plan.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(w));
  std::sort(plan.selected.begin(), plan.selected.end());
  plan.table = table;
  return plan;
}

nlohmann::json defense_plan_json(const DefensePlan& plan) {
  return {{"selected_lines", plan.selected},
          {"frequencies", plan.table.frequencies},
          {"counts", plan.table.counts},
          {"h", plan.table.h},
          {"stability_trace", plan.stability_trace},
          {"stable", plan.stable}};
}

std::string attack_records_csv(std::span<const AttackSequence> sequences) {
  std::ostringstream os;
  os.precision(17);
  os << "experiment,attacker,stage,line,loss_mw\n";
  for (const auto& seq : sequences) {
    for (std::size_t i = 0; i < seq.lines.size(); ++i) {
      for (std::size_t t = 0; t < seq.lines[i].size(); ++t) {
        os << seq.experiment << ',' << i << ',' << t << ',' << seq.lines[i][t] << ',' << seq.stage_loss_mw.at(t) << '\n';
      }
    }
  }
  return os.str();
}

AttackSequence train_and_execute(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                                 const std::string& method, std::size_t experiment) {
  const GameConfig g = method_game(method, game);
  TrainHooks hooks;
  hooks.method = method;
  TrainOutput out = method == "sams" ? train_dqn(grid, game, train, hooks) : train_maac(grid, g, train, hooks);
  const TrainedAttacker attacker = TrainedAttacker::from_checkpoint(out.checkpoint);
  AttackEnv env(grid, g);
  return execute(attacker, env, experiment);
}

void parallel_for(std::size_t count, std::size_t parallel, const std::function<void(std::size_t)>& job) {
  parallel = std::max<std::size_t>(1, std::min(parallel, count));
  if (parallel == 1) {
    for (std::size_t k = 0; k < count; ++k) job(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < parallel; ++w) {
    workers.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          job(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

DefenseAccumulator::DefenseAccumulator(std::size_t n_lines, const DefenseOptions& options)
    : n_lines_(n_lines), options_(options) {
  if (options.max_experiments < 1) fail(ErrorKind::Validation, "need at least one experiment");
  if (options.w > n_lines) fail(ErrorKind::Domain, "defense size exceeds the line count");
  options_.stable_window = std::max<std::size_t>(1, options.stable_window);
}

bool DefenseAccumulator::finished() const noexcept {
  return plan_.stable || sequences_.size() >= options_.max_experiments;
}

bool DefenseAccumulator::add(AttackSequence sequence) {
  if (finished()) fail(ErrorKind::State, "defense aggregation already finished");
  const std::vector<double> previous = plan_.table.frequencies;
  sequences_.push_back(std::move(sequence));
  const FrequencyTable table = aggregate_frequencies(sequences_, n_lines_);
  std::vector<double> trace = std::move(plan_.stability_trace);
  if (!previous.empty()) trace.push_back(stability_distance(previous, table.frequencies));
  plan_ = select_defense(table, options_.w);
  plan_.stability_trace = std::move(trace);
  tops_.push_back(plan_.selected);
  const std::size_t window = options_.stable_window;
  if (tops_.size() >= window && !plan_.stability_trace.empty()) {
    const bool unchanged = std::all_of(tops_.end() - static_cast<std::ptrdiff_t>(window), tops_.end(),
                                       [&](const auto& t) { return t == tops_.back(); });
    plan_.stable = unchanged && plan_.stability_trace.back() < options_.distance_threshold;
  }
  return finished();
}

DefenseRun plan_defense(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                        const DefenseOptions& options, const std::function<void(const AttackSequence&)>& on_experiment) {
  DefenseAccumulator acc(grid->num_lines(), options);
  while (!acc.finished()) {
    const std::size_t h = acc.sequences().size();
    const std::size_t wave = std::min(std::max<std::size_t>(1, options.parallel), options.max_experiments - h);
    std::vector<AttackSequence> results(wave);
    parallel_for(wave, options.parallel, [&](std::size_t k) {
      TrainConfig cfg = train;
      cfg.seed = train.seed + h + k + 1;
      results[k] = train_and_execute(grid, game, cfg, options.method, h + k + 1);
    });
    for (auto& seq : results) {
      if (acc.finished()) break;
      if (on_experiment) on_experiment(seq);
      acc.add(std::move(seq));
    }
  }
  return {acc.plan(), acc.sequences()};
}

LossStats loss_statistics(std::vector<double> samples) {
  LossStats s;
  s.n = samples.size();
  if (s.n == 0) fail(ErrorKind::Domain, "no samples");
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
    const boost::math::students_t dist(static_cast<double>(s.n - 1));
    s.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * s.stddev / std::sqrt(static_cast<double>(s.n));
  }
  s.samples = std::move(samples);
  return s;
}

LossStats evaluate_defense(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                           const DefenseSet& defense, std::size_t repetitions, const std::string& method,
                           std::size_t parallel) {
  if (repetitions < 1) fail(ErrorKind::Validation, "need at least one repetition");
  defense.check(grid->num_lines());
  GameConfig g = game;
  g.defense = defense;
  std::vector<double> losses(repetitions);
  parallel_for(repetitions, parallel, [&](std::size_t r) {
    TrainConfig cfg = train;
    cfg.seed = train.seed + r;
    losses[r] = train_and_execute(grid, g, cfg, method, r).loss_mw;
  });
  return loss_statistics(std::move(losses));
}

}  // namespace gridattack
