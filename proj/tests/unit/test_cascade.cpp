#include <gtest/gtest.h>

#include "gridattack/attack_env.hpp"
#include "gridattack/cascade.hpp"
#include "gridattack/errors.hpp"
#include "gridattack/rng.hpp"
#include "support/cases.hpp"
#include "support/invariants.hpp"
#include "support/oracles.hpp"

using namespace gridattack;

namespace {

GridCase raw_case(const std::vector<double>& loads, const std::vector<std::pair<double, double>>& gens) {
  GridCase grid;
  grid.name = "raw";
  for (std::size_t b = 0; b < loads.size(); ++b) grid.buses.push_back({b, loads[b]});
  for (const auto& [out, max] : gens) grid.generators.push_back({0, out, max, std::nullopt});
  return grid;
}

std::vector<BusId> all_buses(const GridCase& grid) {
  std::vector<BusId> v(grid.num_buses());
  std::iota(v.begin(), v.end(), BusId{0});
  return v;
}

}  // namespace

TEST(ApplyAttacks, OutOfServiceLineUnchanged) {
  LineStateVector s(6);
  s.set(2, false);
  const std::vector<AttackAction> a{{2, 0}};
  EXPECT_EQ(apply_attacks(s, a, {}), s);
}

TEST(ApplyAttacks, DefendedLineUnchanged) {
  const LineStateVector s(6);
  const std::vector<AttackAction> a{{4, 0}, {4, 1}};
  EXPECT_EQ(apply_attacks(s, a, DefenseSet({4})), s);
}

TEST(ApplyAttacks, DuplicateTargetsOneRemoval) {
  const LineStateVector s(8);
  const std::vector<AttackAction> a{{5, 0}, {5, 1}};
  const auto next = apply_attacks(s, a, {});
  EXPECT_FALSE(next.in_service(5));
  EXPECT_EQ(next.count_in_service(), 7u);
}

TEST(ApplyAttacks, OutOfRangeLineThrows) {
  const std::vector<AttackAction> a{{9, 0}};
  EXPECT_THROW(apply_attacks(LineStateVector(4), a, {}), Error);
}

TEST(Rebalance, GeneratorsWithoutLoadGoToZero) {
  const GridCase grid = raw_case({0.0, 0.0}, {{30.0, 50.0}, {20.0, 40.0}});
  const Dispatch d = rebalance_island(grid, all_buses(grid), {{30.0, 20.0}, {0.0, 0.0}});
  EXPECT_DOUBLE_EQ(d.generation[0], 0.0);
  EXPECT_DOUBLE_EQ(d.generation[1], 0.0);
  EXPECT_DOUBLE_EQ(d.total_served_load(), 0.0);
}

TEST(Rebalance, CapacityForcedShedding) {
  const GridCase grid = raw_case({60.0, 40.0}, {{50.0, 60.0}});
  const Dispatch d = rebalance_island(grid, all_buses(grid), {{50.0}, {60.0, 40.0}});
  EXPECT_NEAR(d.generation[0], 60.0, 1e-9);
  EXPECT_NEAR(d.served_load[0], 36.0, 1e-9);
  EXPECT_NEAR(d.served_load[1], 24.0, 1e-9);
}

TEST(Rebalance, DeficitByHeadroom) {
  const GridCase grid = raw_case({100.0}, {{30.0, 50.0}, {30.0, 100.0}});
  const Dispatch d = rebalance_island(grid, all_buses(grid), {{30.0, 30.0}, {100.0}});
  EXPECT_NEAR(d.generation[0], 30.0 + 40.0 * 20.0 / 90.0, 1e-4);
  EXPECT_NEAR(d.generation[1], 30.0 + 40.0 * 70.0 / 90.0, 1e-4);
  EXPECT_NEAR(d.generation[0], 38.89, 1e-2);
  EXPECT_NEAR(d.generation[1], 61.11, 1e-2);
  EXPECT_NEAR(d.served_load[0], 100.0, 1e-12);
}

TEST(Rebalance, SurplusReducedProportionally) {
  const GridCase grid = raw_case({40.0}, {{30.0, 50.0}, {30.0, 100.0}});
  const Dispatch d = rebalance_island(grid, all_buses(grid), {{30.0, 30.0}, {40.0}});
  EXPECT_NEAR(d.generation[0] + d.generation[1], 40.0, 1e-9);
  EXPECT_NEAR(d.served_load[0], 40.0, 1e-12);
}

TEST(Rebalance, OnlyIslandEntriesChange) {
  const GridCase grid = raw_case({10.0, 50.0}, {{20.0, 100.0}});
  const std::vector<BusId> island{1};
  const Dispatch prior{{20.0}, {10.0, 50.0}};
  const Dispatch d = rebalance_island(grid, island, prior);
  EXPECT_DOUBLE_EQ(d.generation[0], 20.0);  // generator sits on bus 0
  EXPECT_DOUBLE_EQ(d.served_load[0], 10.0);
  EXPECT_DOUBLE_EQ(d.served_load[1], 0.0);
}

TEST(TripOverloads, NoneWhenWithinRating) {
  const std::vector<double> f{10.0, -50.0, 99.9};
  const std::vector<double> c{10.0, 50.0, 100.0};
  EXPECT_TRUE(trip_overloads(f, c, 1.0).empty());
}

TEST(TripOverloads, ToleranceBoundary) {
  const std::vector<double> c{100.0};
  const std::vector<double> below{119.0};
  const std::vector<double> above{121.0};
  EXPECT_TRUE(trip_overloads(below, c, 1.2).empty());
  EXPECT_EQ(trip_overloads(above, c, 1.2), (std::vector<LineId>{0}));
  EXPECT_EQ(trip_overloads(above, c, 1.0), (std::vector<LineId>{0}));
  const std::vector<double> exact{120.0};
  EXPECT_TRUE(trip_overloads(exact, c, 1.2).empty());
}

TEST(TripOverloads, NaNNeverTrips) {
  const std::vector<double> f{std::nan(""), 200.0};
  const std::vector<double> c{1.0, 100.0};
  EXPECT_EQ(trip_overloads(f, c, 1.0), (std::vector<LineId>{1}));
}

TEST(TripOverloads, RandomMatchesElementwiseOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> f(50), c(50);
    for (std::size_t k = 0; k < f.size(); ++k) {
      f[k] = rng.uniform(-200.0, 200.0);
      c[k] = rng.uniform(1.0, 150.0);
    }
    const double tol = rng.uniform(0.8, 1.5);
    std::vector<LineId> expect;
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (std::abs(f[k]) > tol * c[k]) expect.push_back(k);
    }
    ASSERT_EQ(trip_overloads(f, c, tol), expect);
  }
}

TEST(RunCascade, SteadyStateIsFixedPoint) {
  const auto& grid = *testcases::ieee14();
  const Dispatch base = Dispatch::base(grid);
  const auto r = run_cascade(grid, LineStateVector(grid.num_lines()), base);
  EXPECT_EQ(r.next_states.count_in_service(), grid.num_lines());
  EXPECT_DOUBLE_EQ(r.generation_loss, 0.0);
  for (const auto& round : r.trip_trace) EXPECT_TRUE(round.tripped.empty());
}

TEST(RunCascade, SeveredLoadIslandLosesItsLoad) {
  const GridCase grid = load_case_json(oracle::case_doc({0.0, 80.0}, {{0, 80, 100}}, {{0, 1, 0.1}}));
  LineStateVector s(1);
  s.set(0, false);
  const auto r = run_cascade(grid, s, Dispatch::base(grid));
  EXPECT_NEAR(r.generation_loss, 80.0, 1e-9);
  EXPECT_NEAR(r.served_generation, 0.0, 1e-9);
}

TEST(RunCascade, OverloadPropagates) {
  // two parallel paths to the load; the thin one trips once the thick one is cut
  const GridCase grid = load_case_json(
      oracle::case_doc({0.0, 100.0}, {{0, 100, 100}}, {{0, 1, 0.1, 200.0}, {0, 1, 0.1, 60.0}}));
  LineStateVector s(2);
  s.set(0, false);
  const auto r = run_cascade(grid, s, Dispatch::base(grid));
  EXPECT_FALSE(r.next_states.in_service(1));
  EXPECT_NEAR(r.generation_loss, 100.0, 1e-9);
  ASSERT_FALSE(r.trip_trace.empty());
}

TEST(RunCascade, Ieee118EpisodeIsDeterministic) {
  const auto grid = testcases::ieee118();
  GameConfig cfg;
  auto play = [&] {
    AttackEnv env(grid, cfg);
    env.reset();
    std::string trace;
    for (const JointAction& a : {JointAction{7, 8, 100}, JointAction{36, 50, 51}, JointAction{120, 5, 9}}) {
      trace += cascade_trace_json(env.step(a).cascade).dump();
    }
    return trace;
  };
  EXPECT_EQ(play(), play());
}

TEST(RunCascade, DimensionMismatchThrows) {
  const auto& grid = *testcases::ieee14();
  EXPECT_THROW(run_cascade(grid, LineStateVector(3), Dispatch::base(grid)), Error);
}

class CascadeInvariants : public ::testing::TestWithParam<std::string> {};

TEST_P(CascadeInvariants, RandomEpisodes) {
  const auto grid = GetParam() == "ieee14" ? testcases::ieee14() : testcases::ieee118();
  GameConfig cfg;
  AttackEnv env(grid, cfg);
  Rng rng(GetParam() == "ieee14" ? 1 : 2);
  for (int ep = 0; ep < 100; ++ep) {
    const auto c = invariants::random_episode(env, rng);
    ASSERT_LE(c.max_island_imbalance, 1e-6) << "episode " << ep;
    ASSERT_TRUE(c.states_monotone) << "episode " << ep;
    ASSERT_TRUE(c.served_load_monotone) << "episode " << ep;
    ASSERT_FALSE(c.truncated) << "episode " << ep;
    ASSERT_LE(c.max_overload_mw, 1e-6) << "episode " << ep;
    ASSERT_LE(c.telescoping_error, 1e-6) << "episode " << ep;
  }
}

INSTANTIATE_TEST_SUITE_P(Cases, CascadeInvariants, ::testing::Values("ieee14", "ieee118"));
