#include "gridattack/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gridattack/errors.hpp"
#include "gridattack/union_find.hpp"

namespace gridattack {

LineStateVector::LineStateVector(std::vector<std::uint8_t> states) : states_(std::move(states)) {
  for (std::size_t l = 0; l < states_.size(); ++l) {
    if (states_[l] > 1) {
      fail(ErrorKind::Domain, "line state " + std::to_string(l) + " is not binary");
    }
  }
}

std::size_t LineStateVector::count_in_service() const noexcept {
  return static_cast<std::size_t>(std::count(states_.begin(), states_.end(), std::uint8_t{1}));
}

bool LineStateVector::dominated_by(const LineStateVector& other) const {
  if (other.size() != size()) fail(ErrorKind::Dimension, "line state vectors differ in length");
  for (std::size_t l = 0; l < states_.size(); ++l) {
    if (states_[l] > other.states_[l]) return false;
  }
  return true;
}

double GridCase::total_load() const noexcept {
  double total = 0.0;
  for (const auto& b : buses) total += b.load;
  return total;
}

double GridCase::total_generation() const noexcept {
  double total = 0.0;
  for (const auto& g : generators) total += g.output;
  return total;
}

std::vector<std::string> validate_case(const GridCase& grid) { return detail::validate_case(grid, true); }

namespace detail {

std::vector<std::string> validate_case(const GridCase& grid, bool ingested) {
  std::vector<std::string> report;
  auto note = [&report](const std::string& msg) { report.push_back(msg); };

  if (!(grid.base_mva > 0.0) || !std::isfinite(grid.base_mva)) note("base_mva must be positive");
  if (grid.buses.empty()) note("case has no buses");

  const std::size_t nb = grid.num_buses();
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& bus = grid.buses[b];
    if (bus.id != b) note("bus " + std::to_string(b) + ": id " + std::to_string(bus.id) + " is not contiguous");
    if (!(bus.load >= 0.0) || !std::isfinite(bus.load)) note("bus " + std::to_string(b) + ": load must be >= 0");
  }

  for (std::size_t g = 0; g < grid.generators.size(); ++g) {
    const auto& gen = grid.generators[g];
    const std::string where = "generator " + std::to_string(g);
    if (gen.bus >= nb) note(where + ": bus " + std::to_string(gen.bus) + " does not exist");
    if (!(gen.max_output >= 0.0) || !std::isfinite(gen.max_output)) note(where + ": max_output must be >= 0");
    if (!(gen.output >= -1e-9) || (ingested && gen.output > gen.max_output + 1e-9)) {
      note(where + ": output outside [0, max_output]");
    }
    if (gen.ramp_limit && !(*gen.ramp_limit > 0.0)) note(where + ": ramp_limit must be > 0");
  }

  for (std::size_t l = 0; l < grid.lines.size(); ++l) {
    const auto& line = grid.lines[l];
    const std::string where = "line " + std::to_string(l);
    if (line.id != l) note(where + ": id " + std::to_string(line.id) + " is not contiguous");
    if (line.from_bus >= nb || line.to_bus >= nb) note(where + ": endpoint bus does not exist");
    if (line.from_bus == line.to_bus) note(where + ": from_bus equals to_bus");
    if (!(line.reactance > 0.0) || !std::isfinite(line.reactance)) note(where + ": reactance must be > 0");
    if ((ingested || line.rated) && (!(line.capacity > 0.0) || !std::isfinite(line.capacity))) {
      note(where + ": capacity must be > 0");
    }
  }

  const double imbalance = grid.total_generation() - grid.total_load();
  if (ingested && std::abs(imbalance) > 1e-6) {
    std::ostringstream os;
    os << "generation and load differ by " << imbalance << " MW";
    note(os.str());
  }

  bool endpoints_ok = true;
  for (const auto& line : grid.lines) endpoints_ok = endpoints_ok && line.from_bus < nb && line.to_bus < nb;
  if (nb > 0 && endpoints_ok) {
    UnionFind uf(nb);
    std::size_t components = nb;
    for (const auto& line : grid.lines) {
      if (uf.unite(line.from_bus, line.to_bus)) --components;
    }
    if (components != 1) note("base topology has " + std::to_string(components) + " islands");
  }
  return report;
}

}  // namespace detail

std::vector<std::size_t> island_labels(const GridCase& grid, const LineStateVector& states) {
  if (states.size() != grid.num_lines()) {
    fail(ErrorKind::Dimension, "state vector has " + std::to_string(states.size()) + " entries, case has " +
                                   std::to_string(grid.num_lines()) + " lines");
  }
  const std::size_t nb = grid.num_buses();
  UnionFind uf(nb);
  for (const auto& line : grid.lines) {
    if (states.in_service(line.id)) uf.unite(line.from_bus, line.to_bus);
  }
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> root_label(nb, unset);
  std::vector<std::size_t> labels(nb);
  std::size_t next = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t root = uf.find(b);
    if (root_label[root] == unset) root_label[root] = next++;
    labels[b] = root_label[root];
  }
  return labels;
}

std::vector<std::vector<BusId>> find_islands(const GridCase& grid, const LineStateVector& states) {
  const auto labels = island_labels(grid, states);
  std::size_t count = 0;
  for (auto label : labels) count = std::max(count, label + 1);
  std::vector<std::vector<BusId>> islands(count);
  for (std::size_t b = 0; b < labels.size(); ++b) islands[labels[b]].push_back(b);
  return islands;
}

}  // namespace gridattack
