#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridattack/attack_env.hpp"
#include "gridattack/nn/actor.hpp"
#include "gridattack/nn/checkpoint.hpp"
#include "gridattack/trainer.hpp"

namespace gridattack {

/// Greedy attack policy restored from a checkpoint: one actor per agent for
/// the multi-agent methods, a single value network for the single-agent
/// baseline.
class TrainedAttacker {
 public:
  static TrainedAttacker from_checkpoint(const nn::Checkpoint& ckpt);

  /// argmax per agent; ties resolve to the lower line id.
  JointAction greedy(const LineStateVector& observation) const;

  const std::string& method() const noexcept { return method_; }
  std::size_t attackers() const noexcept { return attackers_; }
  std::size_t stages() const noexcept { return stages_; }
  std::size_t num_lines() const noexcept { return n_lines_; }

 private:
  std::string method_;
  std::size_t attackers_ = 0, stages_ = 0, n_lines_ = 0;
  std::vector<nn::Actor> networks_;
};

/// Lines chosen by every attacker over the stages of one experiment.
struct AttackSequence {
  std::size_t experiment = 0;
  std::vector<std::vector<LineId>> lines;  // [attacker][stage]
  std::vector<double> stage_loss_mw;
  double loss_mw = 0.0;
};

/// Run one greedy episode. Throws Error{Compatibility} when the checkpoint
/// was trained for a different line count or game geometry.
AttackSequence execute(const TrainedAttacker& attacker, AttackEnv& env, std::size_t experiment = 0);

struct FrequencyTable {
  std::vector<std::size_t> counts;  // experiments in which each line was attacked
  std::vector<double> frequencies;  // counts / h
  std::size_t h = 0;
};

/// A line counts once per experiment, whatever the attacker or stage.
FrequencyTable aggregate_frequencies(std::span<const AttackSequence> sequences, std::size_t n_lines);

/// Euclidean distance between two frequency vectors.
double stability_distance(std::span<const double> previous, std::span<const double> current);

struct DefensePlan {
  std::vector<LineId> selected;
  FrequencyTable table;
  std::vector<double> stability_trace;  // distance between consecutive tables
  bool stable = false;
};

/// W highest-frequency lines, ties to the lower id. Throws Error{Domain}
/// when W exceeds the line count.
DefensePlan select_defense(const FrequencyTable& table, std::size_t w);

nlohmann::json defense_plan_json(const DefensePlan& plan);
/// Rows experiment,attacker,stage,line,loss_mw where loss_mw is the stage loss.
std::string attack_records_csv(std::span<const AttackSequence> sequences);

/// Train one attacker with the given method and seed, then execute it greedily.
AttackSequence train_and_execute(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                                 const std::string& method, std::size_t experiment);

struct DefenseOptions {
  std::size_t w = 9;
  std::size_t max_experiments = 15;
  std::size_t stable_window = 3;       // top-W must be unchanged over this many experiments
  double distance_threshold = 0.05;
  std::size_t parallel = 1;
  std::string method = "maac";
};

/// Incremental frequency aggregation with the stopping rule: stop once the
/// top-W set is unchanged over the last `stable_window` experiments and the
/// latest stability distance is below the threshold, or at max_experiments.
class DefenseAccumulator {
 public:
  DefenseAccumulator(std::size_t n_lines, const DefenseOptions& options);

  /// Add experiment h + 1. Returns true when no further experiment is needed.
  bool add(AttackSequence sequence);
  bool finished() const noexcept;

  const DefensePlan& plan() const noexcept { return plan_; }
  const std::vector<AttackSequence>& sequences() const noexcept { return sequences_; }

 private:
  std::size_t n_lines_;
  DefenseOptions options_;
  DefensePlan plan_;
  std::vector<AttackSequence> sequences_;
  std::vector<std::vector<LineId>> tops_;
};

struct DefenseRun {
  DefensePlan plan;
  std::vector<AttackSequence> sequences;
};

/// Experiment h trains with seed train.seed + h. Experiments run in waves of
/// `parallel`; results are reduced in experiment order, so the plan does not
/// depend on the degree of parallelism.
DefenseRun plan_defense(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                        const DefenseOptions& options,
                        const std::function<void(const AttackSequence&)>& on_experiment = {});

struct LossStats {
  std::vector<double> samples;
  double mean = 0.0;
  double stddev = 0.0;      // sample standard deviation
  double half_width = 0.0;  // 95% Student-t interval half width
  std::size_t n = 0;
};

LossStats loss_statistics(std::vector<double> samples);

/// Retrain and execute attackers against a fixed defense. Repetition r
/// trains with seed train.seed + r.
LossStats evaluate_defense(std::shared_ptr<const GridCase> grid, const GameConfig& game, const TrainConfig& train,
                           const DefenseSet& defense, std::size_t repetitions, const std::string& method = "maac",
                           std::size_t parallel = 1);

/// Run jobs 0..count-1 over `parallel` threads; job results land by index.
void parallel_for(std::size_t count, std::size_t parallel, const std::function<void(std::size_t)>& job);

}  // namespace gridattack
