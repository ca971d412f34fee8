#include <gtest/gtest.h>

#include "gridattack/cascade.hpp"
#include "gridattack/dc_powerflow.hpp"
#include "gridattack/errors.hpp"
#include "gridattack/rng.hpp"
#include "support/cases.hpp"
#include "support/invariants.hpp"
#include "support/oracles.hpp"

using namespace gridattack;

namespace {

// Lines ordered (0-2, 0-1, 1-2) so the direct path comes first.
GridCase triangle() {
  return load_case_json(
      oracle::case_doc({0.0, 0.0, 100.0}, {{0, 100, 200}}, {{0, 2, 0.1}, {0, 1, 0.1}, {1, 2, 0.1}}));
}

GridCase two_bus() { return load_case_json(oracle::case_doc({0.0, 100.0}, {{0, 100, 150}}, {{0, 1, 0.1}})); }

}  // namespace

TEST(Susceptance, TwoBusSingleLine) {
  const GridCase grid = two_bus();
  const std::vector<BusId> island{0, 1};
  const auto sys = build_susceptance(grid, island, LineStateVector(1));
  EXPECT_EQ(sys.slack, 0u);
  ASSERT_EQ(sys.matrix.rows(), 1);
  EXPECT_NEAR(sys.matrix(0, 0), 10.0, 1e-12);
}

TEST(Susceptance, TriangleReducedMatrix) {
  const GridCase grid = triangle();
  const std::vector<BusId> island{0, 1, 2};
  const auto sys = build_susceptance(grid, island, LineStateVector(3));
  EXPECT_EQ(sys.slack, 0u);
  ASSERT_EQ(sys.matrix.rows(), 2);
  EXPECT_NEAR(sys.matrix(0, 0), 20.0, 1e-12);
  EXPECT_NEAR(sys.matrix(1, 1), 20.0, 1e-12);
  EXPECT_NEAR(sys.matrix(0, 1), -10.0, 1e-12);
  EXPECT_NEAR(sys.matrix(1, 0), -10.0, 1e-12);
}

TEST(Susceptance, OutOfServiceLineAbsent) {
  const GridCase grid = triangle();
  LineStateVector states(3);
  states.set(2, false);  // 1-2
  const std::vector<BusId> island{0, 1, 2};
  const auto sys = build_susceptance(grid, island, states);
  EXPECT_NEAR(sys.matrix(0, 0), 10.0, 1e-12);
  EXPECT_NEAR(sys.matrix(1, 1), 10.0, 1e-12);
  EXPECT_NEAR(sys.matrix(0, 1), 0.0, 1e-12);
}

TEST(SolveIsland, ZeroInjectionsGiveZeroAngles) {
  const GridCase grid = triangle();
  const std::vector<BusId> island{0, 1, 2};
  const auto sys = build_susceptance(grid, island, LineStateVector(3));
  const std::vector<double> p{0.0, 0.0};
  const auto theta = solve_island(sys, p, grid.base_mva);
  EXPECT_NEAR(theta.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(SolveIsland, TwoBusTransferAngle) {
  const GridCase grid = two_bus();
  const std::vector<BusId> island{0, 1};
  const auto sys = build_susceptance(grid, island, LineStateVector(1));
  const std::vector<double> p{-100.0};
  const auto theta = solve_island(sys, p, grid.base_mva);
  EXPECT_NEAR(theta[0], -0.1, 1e-12);
}

TEST(BranchFlows, EqualAnglesGiveZeroFlow) {
  const GridCase grid = triangle();
  const std::vector<double> angles{0.3, 0.3, 0.3};
  for (double f : branch_flows(grid, LineStateVector(3), angles)) EXPECT_NEAR(f, 0.0, 1e-12);
}

TEST(BranchFlows, TwoBusCarriesTransfer) {
  const GridCase grid = two_bus();
  const std::vector<double> inj{100.0, -100.0};
  const auto pf = solve_dc_powerflow(grid, LineStateVector(1), inj);
  EXPECT_NEAR(pf.flows[0], 100.0, 1e-9);
}

TEST(BranchFlows, TriangleHandSolved) {
  const GridCase grid = triangle();
  const std::vector<double> inj{100.0, 0.0, -100.0};
  const auto pf = solve_dc_powerflow(grid, LineStateVector(3), inj);
  EXPECT_NEAR(pf.flows[0], 200.0 / 3.0, 1e-4);
  EXPECT_NEAR(pf.flows[1], 100.0 / 3.0, 1e-4);
  EXPECT_NEAR(pf.flows[2], 100.0 / 3.0, 1e-4);
  for (double r : kcl_residuals(grid, LineStateVector(3), pf.flows, inj)) EXPECT_LE(std::abs(r), 1e-6);
}

TEST(BranchFlows, OutOfServiceIsNaN) {
  const GridCase grid = triangle();
  LineStateVector states(3);
  states.set(0, false);
  const std::vector<double> inj{100.0, 0.0, -100.0};
  const auto pf = solve_dc_powerflow(grid, states, inj);
  EXPECT_FALSE(PowerFlowSolution::has_flow(pf.flows[0]));
  EXPECT_NEAR(pf.flows[1], 100.0, 1e-9);
}

TEST(DcPowerFlow, Ieee14KclAndPseudoInverseOracle) {
  const auto& grid = *testcases::ieee14();
  const auto inj = invariants::bus_injections(grid, Dispatch::base(grid));
  const LineStateVector states(grid.num_lines());
  const auto pf = solve_dc_powerflow(grid, states, inj);
  for (double r : kcl_residuals(grid, states, pf.flows, inj)) EXPECT_LE(std::abs(r), 1e-6);
  const auto ref = oracle::pinv_flows(grid, states, inj);
  for (std::size_t l = 0; l < grid.num_lines(); ++l) EXPECT_NEAR(pf.flows[l], ref[l], 1e-6) << "line " << l;
}

TEST(DcPowerFlow, Ieee118RandomOutagesMatchOracle) {
  const auto& grid = *testcases::ieee118();
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    LineStateVector states(grid.num_lines());
    for (int k = 0; k < 10; ++k) states.set(rng.index(grid.num_lines()), false);
    // balance every island by scaling its load to its generation
    Dispatch d = Dispatch::base(grid);
    for (const auto& island : find_islands(grid, states)) d = rebalance_island(grid, island, d);
    const auto inj = invariants::bus_injections(grid, d);
    const auto pf = solve_dc_powerflow(grid, states, inj);
    const auto ref = oracle::pinv_flows(grid, states, inj);
    for (std::size_t l = 0; l < grid.num_lines(); ++l) {
      if (!states.in_service(l)) {
        EXPECT_FALSE(PowerFlowSolution::has_flow(pf.flows[l]));
        continue;
      }
      ASSERT_NEAR(pf.flows[l], ref[l], 1e-6) << "trial " << trial << " line " << l;
    }
    for (double r : kcl_residuals(grid, states, pf.flows, inj)) ASSERT_LE(std::abs(r), 1e-6);
  }
}

TEST(DcPowerFlow, SlackIsLargestGenerator) {
  const auto& grid = *testcases::ieee14();
  std::vector<BusId> all(grid.num_buses());
  std::iota(all.begin(), all.end(), BusId{0});
  const BusId slack = choose_slack(grid, all);
  double best = -1.0;
  BusId expect = 0;
  for (const auto& g : grid.generators) {
    if (g.max_output > best || (g.max_output == best && g.bus < expect)) {
      best = g.max_output;
      expect = g.bus;
    }
  }
  EXPECT_EQ(slack, expect);
}

TEST(DcPowerFlow, InjectionLengthMismatchThrows) {
  const GridCase grid = triangle();
  const std::vector<double> inj{1.0};
  EXPECT_THROW(solve_dc_powerflow(grid, LineStateVector(3), inj), Error);
}
