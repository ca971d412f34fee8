#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "gridattack/attack_env.hpp"

namespace gridattack {

struct OracleOptions {
  /// Abort with Error{Domain} if more leaf sequences than this would be
  /// evaluated.
  std::uint64_t max_sequences = 50'000'000;
  std::size_t max_reported = 32;
  double tie_tolerance_mw = 1e-9;
};

struct OracleResult {
  double max_loss_mw = 0.0;
  std::vector<std::vector<JointAction>> argmax;  // up to max_reported optimal sequences
  std::size_t argmax_count = 0;
  std::uint64_t sequences = 0;  // distinct leaf outcomes evaluated
  double total_generation_mw = 0.0;
};

/// Exhaustive search over every K-per-stage attack sequence of the game.
/// Joint actions with the same effective removal set (in-service,
/// undefended lines) lead to the same successor, so each stage enumerates
/// distinct effective sets of size <= K instead of all N^K tuples.
OracleResult brute_force_oracle(std::shared_ptr<const GridCase> grid, const GameConfig& game,
                                const OracleOptions& options = {});

/// Total generation loss (MW) of replaying a fixed joint-action sequence.
double sequence_loss(std::shared_ptr<const GridCase> grid, const GameConfig& game,
                     const std::vector<JointAction>& sequence);

nlohmann::json oracle_to_json(const OracleResult& result);

}  // namespace gridattack
