#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridattack/grid.hpp"

namespace gridattack {

/// Reduced nodal susceptance matrix of one island (slack row/column removed).
struct ReducedSusceptance {
  Eigen::MatrixXd matrix;          // per unit
  BusId slack = 0;
  std::vector<BusId> island;       // island buses, ascending
  std::vector<BusId> reduced_buses;  // row/column order of `matrix`
};

/// Island reference bus: the bus with the largest-capacity generator, ties to
/// the lowest bus id. Islands without generators use their lowest bus.
BusId choose_slack(const GridCase& grid, std::span<const BusId> island);

ReducedSusceptance build_susceptance(const GridCase& grid, std::span<const BusId> island,
                                     const LineStateVector& states);

/// Solve B' theta = P for the non-slack buses. `injections_mw` follows
/// `reduced_buses` order. Returns the non-slack angles in radians.
Eigen::VectorXd solve_island(const ReducedSusceptance& system, std::span<const double> injections_mw,
                             double base_mva);

struct PowerFlowSolution {
  std::vector<double> angles;  // radians, per bus
  std::vector<double> flows;   // MW from->to, per line; NaN when out of service
  std::vector<BusId> slack_buses;  // one per island, in find_islands order

  static bool has_flow(double f) { return f == f; }
};

/// Line flows from bus angles. Out-of-service lines get NaN.
std::vector<double> branch_flows(const GridCase& grid, const LineStateVector& states,
                                 std::span<const double> angles);

/// Full DC power flow over every island. `injections_mw` is per bus and must
/// balance within each island; the slack absorbs any residual.
PowerFlowSolution solve_dc_powerflow(const GridCase& grid, const LineStateVector& states,
                                     std::span<const double> injections_mw);

/// Per-bus mismatch between net line outflow and injection (MW).
std::vector<double> kcl_residuals(const GridCase& grid, const LineStateVector& states,
                                  std::span<const double> flows, std::span<const double> injections_mw);

}  // namespace gridattack
