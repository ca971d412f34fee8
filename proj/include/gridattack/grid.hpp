#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gridattack {

using BusId = std::size_t;
using LineId = std::size_t;

struct Bus {
  BusId id = 0;
  double load = 0.0;  // MW
};

struct Generator {
  BusId bus = 0;
  double output = 0.0;      // MW
  double max_output = 0.0;  // MW
  std::optional<double> ramp_limit;  // MW per cascade round; unbounded when empty
};

struct Line {
  LineId id = 0;
  BusId from_bus = 0;
  BusId to_bus = 0;
  double reactance = 0.0;  // per unit
  double capacity = 0.0;   // MW
  bool rated = false;      // capacity came from the source rather than the base-flow rule
};

/// Binary in/out-of-service vector over all lines (1 = in service).
class LineStateVector {
 public:
  LineStateVector() = default;
  explicit LineStateVector(std::size_t n, std::uint8_t value = 1) : states_(n, value) {}
  explicit LineStateVector(std::vector<std::uint8_t> states);

  static LineStateVector all_in_service(std::size_t n) { return LineStateVector(n, 1); }

  std::size_t size() const noexcept { return states_.size(); }
  bool in_service(LineId l) const { return states_.at(l) != 0; }
  void set(LineId l, bool in_service) { states_.at(l) = in_service ? 1 : 0; }
  std::size_t count_in_service() const noexcept;

  const std::vector<std::uint8_t>& values() const noexcept { return states_; }

  /// True when every entry of *this is <= the matching entry of other.
  bool dominated_by(const LineStateVector& other) const;

  friend bool operator==(const LineStateVector&, const LineStateVector&) = default;

 private:
  std::vector<std::uint8_t> states_;
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Line> lines;

  std::size_t num_buses() const noexcept { return buses.size(); }
  std::size_t num_lines() const noexcept { return lines.size(); }
  double total_load() const noexcept;
  double total_generation() const noexcept;
};

/// Ingestion options for line ratings absent from the source.
struct CaseOptions {
  double capacity_factor = 1.2;      // capacity = max(floor, factor * |base flow|)
  double capacity_floor_mw = 20.0;
};

/// Load a case from a JSON document or a MATPOWER .m table file. The format
/// is detected from content. Throws Error{Parse} with a location on malformed
/// input and Error{Validation} when the base case is invalid.
GridCase load_case(std::string_view source, const CaseOptions& options = {});
GridCase load_case_file(const std::string& path, const CaseOptions& options = {});

GridCase load_case_json(const nlohmann::json& doc, const CaseOptions& options = {});
GridCase load_case_matpower(std::string_view text, const CaseOptions& options = {});

/// JSON case schema export. Lines whose rating was derived (not given by the
/// source) are written without capacity_mw unless include_capacities is set.
nlohmann::json case_to_json(const GridCase& grid, bool include_capacities = true);

/// Every invariant violation found; empty when the case is valid.
std::vector<std::string> validate_case(const GridCase& grid);

namespace detail {
/// With ingested=false, derived quantities (balance, unrated capacities,
/// output above max) are not checked yet.
std::vector<std::string> validate_case(const GridCase& grid, bool ingested);
}  // namespace detail

/// Connected components of buses over in-service lines. Components are
/// ordered by their smallest bus id and each component lists buses ascending.
std::vector<std::vector<BusId>> find_islands(const GridCase& grid, const LineStateVector& states);

/// Component label per bus, labels numbered as in find_islands.
std::vector<std::size_t> island_labels(const GridCase& grid, const LineStateVector& states);

}  // namespace gridattack
