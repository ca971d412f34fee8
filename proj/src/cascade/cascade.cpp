#include "gridattack/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridattack/dc_powerflow.hpp"
#include "gridattack/errors.hpp"

namespace gridattack {

DefenseSet::DefenseSet(std::vector<LineId> lines) : lines_(std::move(lines)) {
  std::sort(lines_.begin(), lines_.end());
  lines_.erase(std::unique(lines_.begin(), lines_.end()), lines_.end());
}

bool DefenseSet::contains(LineId l) const { return std::binary_search(lines_.begin(), lines_.end(), l); }

void DefenseSet::check(std::size_t n_lines) const {
  if (!lines_.empty() && lines_.back() >= n_lines) {
    fail(ErrorKind::Domain, "defended line " + std::to_string(lines_.back()) + " is out of range");
  }
}

Dispatch Dispatch::base(const GridCase& grid) {
  Dispatch d;
  d.generation.reserve(grid.generators.size());
  for (const auto& g : grid.generators) d.generation.push_back(g.output);
  d.served_load.reserve(grid.num_buses());
  for (const auto& b : grid.buses) d.served_load.push_back(b.load);
  return d;
}

double Dispatch::served_generation() const { return std::accumulate(generation.begin(), generation.end(), 0.0); }

double Dispatch::total_served_load() const { return std::accumulate(served_load.begin(), served_load.end(), 0.0); }

LineStateVector apply_attacks(const LineStateVector& states, std::span<const AttackAction> actions,
                              const DefenseSet& defense) {
  LineStateVector next = states;
  for (const auto& action : actions) {
    if (action.line >= states.size()) {
      fail(ErrorKind::Domain, "attacked line " + std::to_string(action.line) + " is out of range");
    }
    if (states.in_service(action.line) && !defense.contains(action.line)) next.set(action.line, false);
  }
  return next;
}

namespace {

/// Lower outputs toward `target` proportionally to output, never below
/// `lower`. Returns the surplus that could not be removed.
double decrease_proportional(std::vector<double>& out, const std::vector<double>& lower, double target) {
  std::vector<bool> active(out.size(), true);
  for (std::size_t pass = 0; pass <= out.size(); ++pass) {
    double total = std::accumulate(out.begin(), out.end(), 0.0);
    double excess = total - target;
    if (excess <= 0.0) return 0.0;
    double active_sum = 0.0;
    for (std::size_t g = 0; g < out.size(); ++g) {
      if (active[g]) active_sum += out[g];
    }
    if (active_sum <= 0.0) return excess;
    bool clamped = false;
    for (std::size_t g = 0; g < out.size(); ++g) {
      if (!active[g]) continue;
      const double proposed = out[g] - excess * out[g] / active_sum;
      if (proposed < lower[g]) {
        out[g] = lower[g];
        active[g] = false;
        clamped = true;
      }
    }
    if (!clamped) {
      for (std::size_t g = 0; g < out.size(); ++g) {
        if (active[g]) out[g] -= excess * out[g] / active_sum;
      }
      return 0.0;
    }
  }
  return std::max(0.0, std::accumulate(out.begin(), out.end(), 0.0) - target);
}

/// Raise outputs toward `target` proportionally to headroom. Returns the
/// deficit left when every unit is at its upper bound.
double increase_proportional(std::vector<double>& out, const std::vector<double>& upper, double target) {
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  const double deficit = target - total;
  if (deficit <= 0.0) return 0.0;
  double headroom = 0.0;
  for (std::size_t g = 0; g < out.size(); ++g) headroom += upper[g] - out[g];
  if (headroom <= deficit) {
    out = upper;
    return deficit - headroom;
  }
  for (std::size_t g = 0; g < out.size(); ++g) out[g] += deficit * (upper[g] - out[g]) / headroom;
  return 0.0;
}

}  // namespace

Dispatch rebalance_island(const GridCase& grid, std::span<const BusId> island, const Dispatch& prior,
                          const CascadeOptions& options) {
  Dispatch next = prior;
  std::vector<bool> member(grid.num_buses(), false);
  for (BusId b : island) member.at(b) = true;

  std::vector<std::size_t> units;
  for (std::size_t g = 0; g < grid.generators.size(); ++g) {
    if (member[grid.generators[g].bus]) units.push_back(g);
  }
  double demand = 0.0;
  for (BusId b : island) demand += prior.served_load[b];

  auto shed_all = [&] {
    for (BusId b : island) next.served_load[b] = 0.0;
    for (auto g : units) next.generation[g] = 0.0;
  };
  if (units.empty() || demand <= 0.0) {
    shed_all();
    return next;
  }

  std::vector<double> out(units.size()), lower(units.size()), upper(units.size());
  for (std::size_t k = 0; k < units.size(); ++k) {
    const auto& gen = grid.generators[units[k]];
    const double p = prior.generation[units[k]];
    double lo = 0.0, hi = gen.max_output;
    if (options.enforce_ramp_limits && gen.ramp_limit) {
      lo = std::max(0.0, p - *gen.ramp_limit);
      hi = std::min(gen.max_output, p + *gen.ramp_limit);
    }
    out[k] = p;
    lower[k] = std::min(lo, p);
    upper[k] = std::max(hi, p);
  }

  double served = demand;
  const double supply = std::accumulate(out.begin(), out.end(), 0.0);
  if (supply < demand) {
    const double unmet = increase_proportional(out, upper, demand);
    served = demand - unmet;
  } else if (supply > demand) {
    double leftover = decrease_proportional(out, lower, demand);
    // Ramp-limited units that cannot come down far enough are disconnected,
    // largest first, and the rest re-dispatched.
    std::vector<bool> tripped(units.size(), false);
    while (leftover > 1e-12) {
      std::size_t largest = units.size();
      for (std::size_t k = 0; k < units.size(); ++k) {
        if (!tripped[k] && (largest == units.size() || out[k] > out[largest])) largest = k;
      }
      if (largest == units.size()) break;
      tripped[largest] = true;
      out[largest] = lower[largest] = upper[largest] = 0.0;
      const double now = std::accumulate(out.begin(), out.end(), 0.0);
      if (now < demand) {
        served = demand - increase_proportional(out, upper, demand);
        leftover = 0.0;
      } else {
        leftover = decrease_proportional(out, lower, demand);
      }
    }
  }

  if (served < demand) {
    const double ratio = demand > 0.0 ? served / demand : 0.0;
    for (BusId b : island) next.served_load[b] = prior.served_load[b] * ratio;
  }
  for (std::size_t k = 0; k < units.size(); ++k) next.generation[units[k]] = out[k];

  // Close the residual left by floating-point arithmetic on the largest unit.
  double gen_sum = 0.0, load_sum = 0.0;
  for (auto g : units) gen_sum += next.generation[g];
  for (BusId b : island) load_sum += next.served_load[b];
  const double residual = load_sum - gen_sum;
  if (residual != 0.0) {
    std::size_t largest = units.front();
    for (auto g : units) {
      if (next.generation[g] > next.generation[largest]) largest = g;
    }
    next.generation[largest] = std::max(0.0, next.generation[largest] + residual);
  }
  return next;
}

std::vector<LineId> trip_overloads(std::span<const double> flows, std::span<const double> capacities,
                                   double tolerance) {
  if (flows.size() != capacities.size()) fail(ErrorKind::Dimension, "flow and capacity vectors differ in length");
  std::vector<LineId> tripped;
  for (std::size_t l = 0; l < flows.size(); ++l) {
    if (std::isnan(flows[l])) continue;
    if (std::abs(flows[l]) > tolerance * capacities[l]) tripped.push_back(l);
  }
  return tripped;
}

CascadeResult run_cascade(const GridCase& grid, const LineStateVector& states_after_attack, const Dispatch& prior,
                          const CascadeOptions& options) {
  if (states_after_attack.size() != grid.num_lines()) fail(ErrorKind::Dimension, "state vector length mismatch");
  if (prior.generation.size() != grid.generators.size() || prior.served_load.size() != grid.num_buses()) {
    fail(ErrorKind::Dimension, "dispatch does not match the case");
  }

  std::vector<double> capacities(grid.num_lines());
  for (const auto& line : grid.lines) capacities[line.id] = line.capacity;

  CascadeResult result;
  result.next_states = states_after_attack;
  Dispatch dispatch = prior;

  auto rebalance_all = [&](const std::vector<std::vector<BusId>>& islands) {
    for (const auto& island : islands) dispatch = rebalance_island(grid, island, dispatch, options);
  };

  std::vector<double> injections(grid.num_buses());
  while (true) {
    const auto islands = find_islands(grid, result.next_states);
    rebalance_all(islands);

    std::fill(injections.begin(), injections.end(), 0.0);
    for (std::size_t b = 0; b < grid.num_buses(); ++b) injections[b] -= dispatch.served_load[b];
    for (std::size_t g = 0; g < grid.generators.size(); ++g) injections[grid.generators[g].bus] += dispatch.generation[g];
    const auto solution = solve_dc_powerflow(grid, result.next_states, injections);

    CascadeRound round;
    round.round = result.rounds;
    round.tripped = trip_overloads(solution.flows, capacities, options.overload_tolerance);
    round.islands = islands.size();
    round.served_generation = dispatch.served_generation();
    round.served_load = dispatch.total_served_load();
    const bool settled = round.tripped.empty();
    for (LineId l : round.tripped) result.next_states.set(l, false);
    result.trip_trace.push_back(std::move(round));
    ++result.rounds;

    if (settled) break;
    if (result.rounds >= options.max_rounds) {
      result.truncated = true;
      rebalance_all(find_islands(grid, result.next_states));
      break;
    }
  }

  result.dispatch = std::move(dispatch);
  result.served_generation = result.dispatch.served_generation();
  result.served_load = result.dispatch.total_served_load();
  result.generation_loss = std::max(0.0, prior.served_generation() - result.served_generation);
  return result;
}

nlohmann::json cascade_trace_json(const CascadeResult& result) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : result.trip_trace) {
    rounds.push_back({{"round", r.round},
                      {"tripped", r.tripped},
                      {"islands", r.islands},
                      {"served_generation_mw", r.served_generation},
                      {"served_load_mw", r.served_load}});
  }
  return {{"rounds", rounds},
          {"round_count", result.rounds},
          {"truncated", result.truncated},
          {"served_generation_mw", result.served_generation},
          {"served_load_mw", result.served_load},
          {"generation_loss_mw", result.generation_loss},
          {"generation_mw", result.dispatch.generation},
          {"served_load_per_bus_mw", result.dispatch.served_load},
          {"line_states", result.next_states.values()}};
}

}  // namespace gridattack
