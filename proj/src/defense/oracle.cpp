#include "gridattack/oracle.hpp"

#include <functional>

#include "gridattack/errors.hpp"

namespace gridattack {
namespace {

// Subsets of `pool` with 1..k elements, each turned into a joint action of
// length k by repeating its first element.
void effective_actions(const std::vector<LineId>& pool, std::size_t k, const std::vector<LineId>& idle,
                       std::vector<JointAction>& out) {
  if (!idle.empty() || pool.empty()) out.push_back(JointAction(k, idle.empty() ? 0 : idle.front()));
  std::vector<LineId> chosen;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (!chosen.empty()) {
      JointAction a(k, chosen.front());
      std::copy(chosen.begin(), chosen.end(), a.begin());
      out.push_back(std::move(a));
    }
    if (chosen.size() == k) return;
    for (std::size_t p = start; p < pool.size(); ++p) {
      chosen.push_back(pool[p]);
      rec(p + 1);
      chosen.pop_back();
    }
  };
  rec(0);
}

std::uint64_t binomial_sum(std::size_t n, std::size_t k) {
  std::uint64_t total = 1, c = 1;
  for (std::size_t j = 1; j <= k && j <= n; ++j) {
    c = c * (n - j + 1) / j;
    total += c;
  }
  return total;
}

}  // namespace

OracleResult brute_force_oracle(std::shared_ptr<const GridCase> grid, const GameConfig& game,
                                const OracleOptions& options) {
  game.check();
  game.defense.check(grid->num_lines());
  std::uint64_t bound = 1;
  const std::uint64_t per_stage = binomial_sum(grid->num_lines(), game.attackers);
  for (std::size_t m = 0; m < game.stages; ++m) {
    if (bound > options.max_sequences / per_stage) {
      fail(ErrorKind::Domain, "exhaustive search exceeds " + std::to_string(options.max_sequences) + " sequences");
    }
    bound *= per_stage;
  }

  AttackEnv root(grid, game);
  root.reset();
  OracleResult result;
  result.total_generation_mw = root.initial_generation();
  result.max_loss_mw = -1.0;
  std::vector<JointAction> path;

  std::function<void(const AttackEnv&)> search = [&](const AttackEnv& env) {
    if (env.done()) {
      ++result.sequences;
      const double loss = env.initial_generation() - env.served_generation();
      if (loss > result.max_loss_mw + options.tie_tolerance_mw) {
        result.max_loss_mw = loss;
        result.argmax.clear();
        result.argmax_count = 0;
      }
      if (loss >= result.max_loss_mw - options.tie_tolerance_mw) {
        ++result.argmax_count;
        if (result.argmax.size() < options.max_reported) result.argmax.push_back(path);
      }
      return;
    }
    std::vector<LineId> pool, idle;
    for (LineId l = 0; l < env.num_lines(); ++l) {
      if (env.line_states().in_service(l) && !game.defense.contains(l)) {
        pool.push_back(l);
      } else {
        idle.push_back(l);
      }
    }
    std::vector<JointAction> actions;
    effective_actions(pool, game.attackers, idle, actions);
    for (const auto& a : actions) {
      AttackEnv child = env;
      child.step(a);
      path.push_back(a);
      search(child);
      path.pop_back();
    }
  };
  search(root);
  return result;
}

double sequence_loss(std::shared_ptr<const GridCase> grid, const GameConfig& game,
                     const std::vector<JointAction>& sequence) {
  AttackEnv env(std::move(grid), game);
  env.reset();
  if (sequence.size() != game.stages) fail(ErrorKind::Dimension, "sequence length must equal the stage count");
  for (const auto& a : sequence) env.step(a);
  return env.initial_generation() - env.served_generation();
}

nlohmann::json oracle_to_json(const OracleResult& result) {
  return {{"max_loss_mw", result.max_loss_mw},
          {"total_generation_mw", result.total_generation_mw},
          {"sequences", result.sequences},
          {"argmax_count", result.argmax_count},
          {"argmax", result.argmax}};
}

}  // namespace gridattack
