#include <gtest/gtest.h>

#include <numeric>

#include "gridattack/errors.hpp"
#include "gridattack/grid.hpp"
#include "gridattack/rng.hpp"
#include "gridattack/union_find.hpp"
#include "support/cases.hpp"
#include "support/oracles.hpp"

using namespace gridattack;

namespace {

bool mentions(const std::vector<std::string>& report, const std::string& text) {
  return std::any_of(report.begin(), report.end(), [&](const std::string& s) { return s.find(text) != std::string::npos; });
}

}  // namespace

TEST(LoadCase, Ieee118Sizes) {
  const auto& grid = *testcases::ieee118();
  EXPECT_EQ(grid.num_buses(), 118u);
  EXPECT_EQ(grid.num_lines(), 186u);
  EXPECT_EQ(grid.generators.size(), 54u);
  EXPECT_NEAR(grid.total_generation(), 4242.0, 1e-6);
  EXPECT_NEAR(grid.total_load(), 4242.0, 1e-6);
}

TEST(LoadCase, Ieee14SizesAndBalance) {
  const auto& grid = *testcases::ieee14();
  EXPECT_EQ(grid.num_buses(), 14u);
  EXPECT_EQ(grid.num_lines(), 20u);
  EXPECT_EQ(grid.generators.size(), 5u);
  EXPECT_NEAR(grid.total_generation(), grid.total_load(), 1e-6);
  EXPECT_NEAR(grid.total_load(), 259.0, 1e-9);
}

TEST(LoadCase, TwoBusMinimal) {
  const GridCase grid = load_case_json(oracle::case_doc({0.0, 100.0}, {{0, 100, 150}}, {{0, 1, 0.1}}));
  EXPECT_EQ(grid.num_lines(), 1u);
  EXPECT_NEAR(grid.total_generation(), 100.0, 1e-12);
  EXPECT_NEAR(grid.total_load(), 100.0, 1e-12);
  EXPECT_TRUE(validate_case(grid).empty());
}

TEST(LoadCase, DerivedCapacityRule) {
  // base flow 100 MW -> max(20, 120); an explicit rating is kept as given
  const GridCase grid =
      load_case_json(oracle::case_doc({0.0, 100.0, 0.0}, {{0, 100, 150}}, {{0, 1, 0.1}, {1, 2, 0.1, 55.0}}));
  EXPECT_NEAR(grid.lines[0].capacity, 120.0, 1e-9);
  EXPECT_FALSE(grid.lines[0].rated);
  EXPECT_NEAR(grid.lines[1].capacity, 55.0, 1e-12);
  EXPECT_TRUE(grid.lines[1].rated);
}

TEST(LoadCase, FloorCapacityForIdleLine) {
  const GridCase grid =
      load_case_json(oracle::case_doc({0.0, 100.0, 0.0}, {{0, 100, 150}}, {{0, 1, 0.1}, {1, 2, 0.1}}));
  EXPECT_NEAR(grid.lines[1].capacity, 20.0, 1e-12);
}

TEST(LoadCase, JsonRoundTripMatchesMatpower) {
  const auto& grid = *testcases::ieee14();
  const GridCase again = load_case_json(case_to_json(grid, false));
  ASSERT_EQ(again.num_lines(), grid.num_lines());
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    EXPECT_DOUBLE_EQ(again.lines[l].capacity, grid.lines[l].capacity);
    EXPECT_DOUBLE_EQ(again.lines[l].reactance, grid.lines[l].reactance);
  }
  for (std::size_t g = 0; g < grid.generators.size(); ++g) {
    EXPECT_DOUBLE_EQ(again.generators[g].output, grid.generators[g].output);
  }
}

TEST(LoadCase, MalformedJsonIsParseError) {
  try {
    load_case("{\"buses\": [", {});
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(LoadCase, MalformedMatpowerIsParseError) {
  try {
    load_case("function mpc = broken\nmpc.bus = [\n1 2 3;\n", {});
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
}

TEST(LoadCase, MissingFileIsParseError) {
  EXPECT_THROW(load_case_file("/nonexistent/case.m"), Error);
}

TEST(LoadCase, UnknownBusIsValidationError) {
  try {
    load_case_json(oracle::case_doc({0.0, 100.0}, {{0, 100, 150}}, {{0, 5, 0.1}}));
    FAIL() << "expected a validation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
}

TEST(ValidateCase, Ieee118IsClean) { EXPECT_TRUE(validate_case(*testcases::ieee118()).empty()); }

TEST(ValidateCase, ZeroReactanceCitesLine) {
  GridCase grid = *testcases::ieee14();
  grid.lines[3].reactance = 0.0;
  const auto report = validate_case(grid);
  ASSERT_FALSE(report.empty());
  EXPECT_TRUE(mentions(report, "line 3"));
}

TEST(ValidateCase, ReportsEveryViolation) {
  GridCase grid = *testcases::ieee14();
  grid.lines[3].reactance = 0.0;
  grid.lines[5].to_bus = grid.lines[5].from_bus;
  grid.buses[2].load = -1.0;
  const auto report = validate_case(grid);
  EXPECT_TRUE(mentions(report, "line 3"));
  EXPECT_TRUE(mentions(report, "line 5"));
  EXPECT_TRUE(mentions(report, "bus 2"));
}

TEST(ValidateCase, BaseTopologyOnly) {
  // line 7 of the 14-bus case is a bridge to bus 8 only through 6-7; the
  // base case stays valid whatever removals would do at runtime
  EXPECT_TRUE(validate_case(*testcases::ieee14()).empty());
}

TEST(Islands, ConnectedBaseCase) {
  const auto& grid = *testcases::ieee118();
  const auto islands = find_islands(grid, LineStateVector::all_in_service(grid.num_lines()));
  ASSERT_EQ(islands.size(), 1u);
  EXPECT_EQ(islands[0].size(), 118u);
}

TEST(Islands, ChainSplit) {
  const GridCase grid =
      load_case_json(oracle::case_doc({0.0, 50.0, 50.0}, {{0, 100, 150}}, {{0, 1, 0.1}, {1, 2, 0.1}}));
  LineStateVector states(2);
  states.set(1, false);
  const auto islands = find_islands(grid, states);
  ASSERT_EQ(islands.size(), 2u);
  EXPECT_EQ(islands[0], (std::vector<BusId>{0, 1}));
  EXPECT_EQ(islands[1], (std::vector<BusId>{2}));
}

TEST(Islands, Ieee118MatchesBfsOracle) {
  const auto& grid = *testcases::ieee118();
  LineStateVector states(grid.num_lines());
  states.set(7, false);
  states.set(8, false);
  EXPECT_EQ(find_islands(grid, states), oracle::bfs_islands(grid, states));
}

TEST(Islands, RandomRemovalsMatchBfsOracle) {
  const auto& grid = *testcases::ieee118();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    LineStateVector states(grid.num_lines());
    const std::size_t cuts = 1 + rng.index(40);
    for (std::size_t k = 0; k < cuts; ++k) states.set(rng.index(grid.num_lines()), false);
    const auto islands = find_islands(grid, states);
    ASSERT_EQ(islands, oracle::bfs_islands(grid, states)) << "trial " << trial;
    const auto labels = island_labels(grid, states);
    for (std::size_t c = 0; c < islands.size(); ++c) {
      for (BusId b : islands[c]) EXPECT_EQ(labels[b], c);
    }
  }
}

TEST(Islands, StateLengthMismatchThrows) {
  const auto& grid = *testcases::ieee14();
  EXPECT_THROW(find_islands(grid, LineStateVector(3)), Error);
}

TEST(UnionFind, MergesAndSeparates) {
  UnionFind uf(6);
  EXPECT_TRUE(uf.unite(0, 1));
  EXPECT_TRUE(uf.unite(2, 3));
  EXPECT_FALSE(uf.unite(1, 0));
  EXPECT_TRUE(uf.connected(0, 1));
  EXPECT_FALSE(uf.connected(1, 2));
  uf.unite(1, 3);
  EXPECT_TRUE(uf.connected(0, 2));
  EXPECT_FALSE(uf.connected(4, 5));
}

TEST(LineStates, Dominance) {
  LineStateVector a(4), b(4);
  a.set(1, false);
  EXPECT_TRUE(a.dominated_by(b));
  EXPECT_FALSE(b.dominated_by(a));
  EXPECT_EQ(a.count_in_service(), 3u);
}
