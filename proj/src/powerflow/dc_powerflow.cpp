#include "gridattack/dc_powerflow.hpp"

#include <algorithm>
#include <cmath>

#include "gridattack/errors.hpp"

namespace gridattack {

BusId choose_slack(const GridCase& grid, std::span<const BusId> island) {
  if (island.empty()) fail(ErrorKind::Domain, "empty island");
  std::vector<bool> member(grid.num_buses(), false);
  for (BusId b : island) member.at(b) = true;

  bool found = false;
  BusId best_bus = 0;
  double best_max = -1.0;
  for (const auto& g : grid.generators) {
    if (!member[g.bus]) continue;
    if (!found || g.max_output > best_max || (g.max_output == best_max && g.bus < best_bus)) {
      found = true;
      best_bus = g.bus;
      best_max = g.max_output;
    }
  }
  if (found) return best_bus;
  return *std::min_element(island.begin(), island.end());
}

ReducedSusceptance build_susceptance(const GridCase& grid, std::span<const BusId> island,
                                     const LineStateVector& states) {
  if (states.size() != grid.num_lines()) fail(ErrorKind::Dimension, "state vector length mismatch");
  ReducedSusceptance system;
  system.island.assign(island.begin(), island.end());
  std::sort(system.island.begin(), system.island.end());
  system.slack = choose_slack(grid, system.island);

  constexpr long absent = -1;
  std::vector<long> row(grid.num_buses(), absent);
  for (BusId b : system.island) {
    if (b == system.slack) continue;
    row[b] = static_cast<long>(system.reduced_buses.size());
    system.reduced_buses.push_back(b);
  }
  std::vector<bool> member(grid.num_buses(), false);
  for (BusId b : system.island) member[b] = true;

  const auto n = static_cast<Eigen::Index>(system.reduced_buses.size());
  system.matrix = Eigen::MatrixXd::Zero(n, n);
  for (const auto& line : grid.lines) {
    if (!states.in_service(line.id) || !member[line.from_bus]) continue;
    const double b = 1.0 / line.reactance;
    const long i = row[line.from_bus];
    const long j = row[line.to_bus];
    if (i != absent) system.matrix(i, i) += b;
    if (j != absent) system.matrix(j, j) += b;
    if (i != absent && j != absent) {
      system.matrix(i, j) -= b;
      system.matrix(j, i) -= b;
    }
  }
  return system;
}

Eigen::VectorXd solve_island(const ReducedSusceptance& system, std::span<const double> injections_mw,
                             double base_mva) {
  const auto n = system.matrix.rows();
  if (static_cast<Eigen::Index>(injections_mw.size()) != n) {
    fail(ErrorKind::Dimension, "injection vector does not match the reduced system");
  }
  if (n == 0) return Eigen::VectorXd();
  Eigen::VectorXd p(n);
  for (Eigen::Index k = 0; k < n; ++k) p[k] = injections_mw[static_cast<std::size_t>(k)] / base_mva;
  Eigen::LLT<Eigen::MatrixXd> llt(system.matrix);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Internal, "singular susceptance matrix");
  return llt.solve(p);
}

std::vector<double> branch_flows(const GridCase& grid, const LineStateVector& states,
                                 std::span<const double> angles) {
  if (angles.size() != grid.num_buses()) fail(ErrorKind::Dimension, "angle vector length mismatch");
  if (states.size() != grid.num_lines()) fail(ErrorKind::Dimension, "state vector length mismatch");
  std::vector<double> flows(grid.num_lines(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& line : grid.lines) {
    if (!states.in_service(line.id)) continue;
    flows[line.id] = (angles[line.from_bus] - angles[line.to_bus]) / line.reactance * grid.base_mva;
  }
  return flows;
}

PowerFlowSolution solve_dc_powerflow(const GridCase& grid, const LineStateVector& states,
                                     std::span<const double> injections_mw) {
  if (injections_mw.size() != grid.num_buses()) fail(ErrorKind::Dimension, "injection vector length mismatch");
  PowerFlowSolution solution;
  solution.angles.assign(grid.num_buses(), 0.0);
  for (const auto& island : find_islands(grid, states)) {
    auto system = build_susceptance(grid, island, states);
    solution.slack_buses.push_back(system.slack);
    if (system.reduced_buses.empty()) continue;
    std::vector<double> p(system.reduced_buses.size());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = injections_mw[system.reduced_buses[k]];
    const Eigen::VectorXd theta = solve_island(system, p, grid.base_mva);
    for (std::size_t k = 0; k < p.size(); ++k) solution.angles[system.reduced_buses[k]] = theta[static_cast<Eigen::Index>(k)];
  }
  solution.flows = branch_flows(grid, states, solution.angles);
  return solution;
}

std::vector<double> kcl_residuals(const GridCase& grid, const LineStateVector& states,
                                  std::span<const double> flows, std::span<const double> injections_mw) {
  std::vector<double> residual(injections_mw.begin(), injections_mw.end());
  for (const auto& line : grid.lines) {
    if (!states.in_service(line.id)) continue;
    residual[line.from_bus] -= flows[line.id];
    residual[line.to_bus] += flows[line.id];
  }
  return residual;
}

}  // namespace gridattack
