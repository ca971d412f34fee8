#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "gridattack/grid.hpp"

namespace gridattack {

/// One attacker's line-switching decision.
struct AttackAction {
  LineId line = 0;
  std::size_t attacker = 0;
};

/// Lines immune to attack.
class DefenseSet {
 public:
  DefenseSet() = default;
  explicit DefenseSet(std::vector<LineId> lines);

  bool contains(LineId l) const;
  std::size_t size() const noexcept { return lines_.size(); }
  bool empty() const noexcept { return lines_.empty(); }
  const std::vector<LineId>& lines() const noexcept { return lines_; }

  /// Throws Error{Domain} when an id is >= n_lines.
  void check(std::size_t n_lines) const;

  friend bool operator==(const DefenseSet&, const DefenseSet&) = default;

 private:
  std::vector<LineId> lines_;  // sorted, unique
};

/// Generator outputs (per generator) and served load (per bus).
struct Dispatch {
  std::vector<double> generation;
  std::vector<double> served_load;

  static Dispatch base(const GridCase& grid);
  double served_generation() const;
  double total_served_load() const;
};

struct CascadeOptions {
  double overload_tolerance = 1.0;  // trip when |flow| > tolerance * capacity
  int max_rounds = 100;
  bool enforce_ramp_limits = true;  // only binds for generators that declare a ramp
};

struct CascadeRound {
  int round = 0;
  std::vector<LineId> tripped;
  std::size_t islands = 0;
  double served_generation = 0.0;
  double served_load = 0.0;
};

struct CascadeResult {
  LineStateVector next_states;
  Dispatch dispatch;
  double served_generation = 0.0;
  double served_load = 0.0;
  double generation_loss = 0.0;  // MW, relative to the prior served generation
  std::vector<CascadeRound> trip_trace;
  int rounds = 0;
  bool truncated = false;
};

/// Out-of-service transition for attacked lines: a line goes out only if it
/// is in service and not defended.
LineStateVector apply_attacks(const LineStateVector& states, std::span<const AttackAction> actions,
                              const DefenseSet& defense);

/// Re-dispatch and shed inside one island so generation equals served load.
/// Only entries belonging to the island are changed.
Dispatch rebalance_island(const GridCase& grid, std::span<const BusId> island, const Dispatch& prior,
                          const CascadeOptions& options = {});

/// Lines with |flow| > tolerance * capacity, ascending. NaN flows (lines out
/// of service) never trip.
std::vector<LineId> trip_overloads(std::span<const double> flows, std::span<const double> capacities,
                                   double tolerance);

/// Iterate islanding, re-dispatch, power flow and overload tripping to a
/// fixed point.
CascadeResult run_cascade(const GridCase& grid, const LineStateVector& states_after_attack, const Dispatch& prior,
                          const CascadeOptions& options = {});

nlohmann::json cascade_trace_json(const CascadeResult& result);

}  // namespace gridattack
