#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gridattack/dc_powerflow.hpp"
#include "gridattack/errors.hpp"
#include "gridattack/grid.hpp"

namespace gridattack {
namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  fail(ErrorKind::Parse, where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) parse_fail(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) parse_fail(where + "." + key, "expected a number");
  return v.get<double>();
}

std::size_t index(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    parse_fail(where + "." + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) parse_fail(where + "." + key, "expected a number");
  return it->get<double>();
}

const json& array_field(const json& doc, const char* key) {
  const auto& v = require(doc, key, "case");
  if (!v.is_array()) parse_fail(std::string("case.") + key, "expected an array");
  return v;
}

/// Scale outputs uniformly toward total load, clamp at max_output, spread any
/// remainder over units with headroom.
void balance_generation(GridCase& grid) {
  const double target = grid.total_load();
  double total_max = 0.0;
  for (const auto& g : grid.generators) total_max += g.max_output;
  if (total_max + 1e-9 < target) {
    std::ostringstream os;
    os << "total generator capacity " << total_max << " MW cannot serve load " << target << " MW";
    fail(ErrorKind::Validation, os.str());
  }

  double current = grid.total_generation();
  if (current > 0.0) {
    const double scale = target / current;
    for (auto& g : grid.generators) g.output = std::min(g.max_output, g.output * scale);
  } else if (total_max > 0.0) {
    for (auto& g : grid.generators) g.output = g.max_output * (target / total_max);
  }

  for (int pass = 0; pass < 64; ++pass) {
    const double remainder = target - grid.total_generation();
    if (std::abs(remainder) <= 1e-9) break;
    if (remainder > 0.0) {
      double headroom = 0.0;
      for (const auto& g : grid.generators) headroom += g.max_output - g.output;
      if (headroom <= 0.0) break;
      for (auto& g : grid.generators) {
        g.output = std::min(g.max_output, g.output + remainder * (g.max_output - g.output) / headroom);
      }
    } else {
      const double total = grid.total_generation();
      for (auto& g : grid.generators) g.output = std::max(0.0, g.output + remainder * g.output / total);
    }
  }
}

/// Ratings for lines the source left unrated, from the balanced base flow.
void assign_capacities(GridCase& grid, const CaseOptions& options) {
  bool any_unrated = std::any_of(grid.lines.begin(), grid.lines.end(), [](const Line& l) { return !l.rated; });
  if (!any_unrated) return;

  std::vector<double> injections(grid.num_buses(), 0.0);
  for (const auto& b : grid.buses) injections[b.id] -= b.load;
  for (const auto& g : grid.generators) injections[g.bus] += g.output;
  const auto all_on = LineStateVector::all_in_service(grid.num_lines());
  const auto solution = solve_dc_powerflow(grid, all_on, injections);
  for (auto& line : grid.lines) {
    if (line.rated) continue;
    line.capacity = std::max(options.capacity_floor_mw, options.capacity_factor * std::abs(solution.flows[line.id]));
  }
}

void check_structure(const GridCase& grid) {
  auto issues = detail::validate_case(grid, /*ingested=*/false);
  if (!issues.empty()) {
    std::string joined;
    for (const auto& msg : issues) joined += (joined.empty() ? "" : "; ") + msg;
    fail(ErrorKind::Validation, joined);
  }
}

GridCase finish_ingestion(GridCase grid, const CaseOptions& options) {
  check_structure(grid);
  for (auto& g : grid.generators) g.output = std::min(g.output, g.max_output);
  balance_generation(grid);
  assign_capacities(grid, options);
  auto report = validate_case(grid);
  if (!report.empty()) {
    std::string joined;
    for (const auto& msg : report) joined += (joined.empty() ? "" : "; ") + msg;
    fail(ErrorKind::Validation, joined);
  }
  return grid;
}

std::string describe_position(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// --- MATPOWER tables --------------------------------------------------------

struct Table {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> source_lines;
};

std::string strip_comment(const std::string& line) {
  auto pos = line.find('%');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

Table read_table(const std::vector<std::string>& lines, std::size_t& i, const std::string& name) {
  Table table;
  // The opening line may carry data after '['.
  std::string first = strip_comment(lines[i]);
  std::string rest = first.substr(first.find('[') + 1);
  auto consume = [&](std::string text, std::size_t lineno) -> bool {
    bool closed = false;
    if (auto close = text.find(']'); close != std::string::npos) {
      text = text.substr(0, close);
      closed = true;
    }
    std::stringstream rows(text);
    std::string row;
    while (std::getline(rows, row, ';')) {
      std::replace(row.begin(), row.end(), ',', ' ');
      std::istringstream is(row);
      std::vector<double> values;
      std::string tok;
      while (is >> tok) {
        try {
          std::size_t used = 0;
          values.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          parse_fail("mpc." + name + " (line " + std::to_string(lineno) + ")", "bad number '" + tok + "'");
        }
      }
      if (!values.empty()) {
        table.rows.push_back(std::move(values));
        table.source_lines.push_back(lineno);
      }
    }
    return closed;
  };
  if (consume(rest, i + 1)) return table;
  for (++i; i < lines.size(); ++i) {
    if (consume(strip_comment(lines[i]), i + 1)) return table;
  }
  parse_fail("mpc." + name, "unterminated table");
}

void require_columns(const Table& t, std::size_t r, std::size_t n, const std::string& name) {
  if (t.rows[r].size() < n) {
    parse_fail("mpc." + name + " (line " + std::to_string(t.source_lines[r]) + ")",
               "expected at least " + std::to_string(n) + " columns");
  }
}

}  // namespace

GridCase load_case_json(const json& doc, const CaseOptions& options) {
  if (!doc.is_object()) parse_fail("case", "expected an object at top level");
  GridCase grid;
  grid.name = doc.value("name", std::string{});
  grid.base_mva = number(doc, "base_mva", "case");

  const auto& buses = array_field(doc, "buses");
  grid.buses.resize(buses.size());
  std::vector<bool> seen(buses.size(), false);
  for (std::size_t k = 0; k < buses.size(); ++k) {
    const std::string where = "buses[" + std::to_string(k) + "]";
    const std::size_t id = index(buses[k], "id", where);
    if (id >= buses.size() || seen[id]) parse_fail(where + ".id", "ids must be unique and contiguous from 0");
    seen[id] = true;
    grid.buses[id] = Bus{id, number(buses[k], "load_mw", where)};
  }

  const auto& gens = array_field(doc, "generators");
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const std::string where = "generators[" + std::to_string(k) + "]";
    Generator g;
    g.bus = index(gens[k], "bus", where);
    g.output = number(gens[k], "output_mw", where);
    g.max_output = number(gens[k], "max_mw", where);
    g.ramp_limit = optional_number(gens[k], "ramp_mw", where);
    grid.generators.push_back(g);
  }

  const auto& lines = array_field(doc, "lines");
  grid.lines.resize(lines.size());
  std::vector<bool> seen_line(lines.size(), false);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string where = "lines[" + std::to_string(k) + "]";
    Line line;
    line.id = index(lines[k], "id", where);
    if (line.id >= lines.size() || seen_line[line.id]) {
      parse_fail(where + ".id", "ids must be unique and contiguous from 0");
    }
    seen_line[line.id] = true;
    line.from_bus = index(lines[k], "from", where);
    line.to_bus = index(lines[k], "to", where);
    line.reactance = number(lines[k], "x_pu", where);
    if (auto cap = optional_number(lines[k], "capacity_mw", where)) {
      line.capacity = *cap;
      line.rated = true;
    }
    grid.lines[line.id] = line;
  }
  return finish_ingestion(std::move(grid), options);
}

GridCase load_case_matpower(std::string_view text, const CaseOptions& options) {
  std::vector<std::string> lines;
  {
    std::string buffer(text);
    std::istringstream is(buffer);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
  }

  GridCase grid;
  std::optional<double> base_mva;
  std::optional<Table> bus_table, gen_table, branch_table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string code = strip_comment(lines[i]);
    if (code.find("function") != std::string::npos) {
      auto eq = code.find('=');
      if (eq != std::string::npos) {
        std::string name = code.substr(eq + 1);
        name.erase(std::remove_if(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c) || c == ';'; }),
                   name.end());
        grid.name = name;
      }
      continue;
    }
    auto field_is = [&](const char* field) {
      auto pos = code.find(field);
      if (pos == std::string::npos) return false;
      auto after = code.find_first_not_of(" \t", pos + std::string(field).size());
      return after != std::string::npos && code[after] == '=';
    };
    if (field_is("mpc.baseMVA")) {
      try {
        base_mva = std::stod(code.substr(code.find('=') + 1));
      } catch (const std::exception&) {
        parse_fail("mpc.baseMVA (line " + std::to_string(i + 1) + ")", "bad number");
      }
    } else if (field_is("mpc.bus")) {
      bus_table = read_table(lines, i, "bus");
    } else if (field_is("mpc.gen")) {
      gen_table = read_table(lines, i, "gen");
    } else if (field_is("mpc.branch")) {
      branch_table = read_table(lines, i, "branch");
    }
  }
  if (!base_mva) parse_fail("mpc", "missing baseMVA");
  if (!bus_table) parse_fail("mpc", "missing bus table");
  if (!gen_table) parse_fail("mpc", "missing gen table");
  if (!branch_table) parse_fail("mpc", "missing branch table");
  grid.base_mva = *base_mva;

  std::map<long long, BusId> bus_index;
  for (std::size_t r = 0; r < bus_table->rows.size(); ++r) {
    require_columns(*bus_table, r, 3, "bus");
    const auto& row = bus_table->rows[r];
    const auto external = static_cast<long long>(row[0]);
    if (!bus_index.emplace(external, grid.buses.size()).second) {
      parse_fail("mpc.bus (line " + std::to_string(bus_table->source_lines[r]) + ")",
                 "duplicate bus number " + std::to_string(external));
    }
    grid.buses.push_back(Bus{grid.buses.size(), row[2]});
  }
  auto lookup = [&](double external, const Table& t, std::size_t r, const std::string& name) {
    auto it = bus_index.find(static_cast<long long>(external));
    if (it == bus_index.end()) {
      parse_fail("mpc." + name + " (line " + std::to_string(t.source_lines[r]) + ")",
                 "unknown bus " + std::to_string(static_cast<long long>(external)));
    }
    return it->second;
  };

  for (std::size_t r = 0; r < gen_table->rows.size(); ++r) {
    require_columns(*gen_table, r, 9, "gen");
    const auto& row = gen_table->rows[r];
    if (row[7] <= 0.0) continue;  // out of service
    Generator g;
    g.bus = lookup(row[0], *gen_table, r, "gen");
    g.output = std::max(0.0, row[1]);
    g.max_output = row[8];
    grid.generators.push_back(g);
  }

  for (std::size_t r = 0; r < branch_table->rows.size(); ++r) {
    require_columns(*branch_table, r, 11, "branch");
    const auto& row = branch_table->rows[r];
    if (row[10] <= 0.0) continue;
    Line line;
    line.id = grid.lines.size();
    line.from_bus = lookup(row[0], *branch_table, r, "branch");
    line.to_bus = lookup(row[1], *branch_table, r, "branch");
    line.reactance = row[3];
    if (row[5] > 0.0) {
      line.capacity = row[5];
      line.rated = true;
    }
    grid.lines.push_back(line);
  }
  return finish_ingestion(std::move(grid), options);
}

GridCase load_case(std::string_view source, const CaseOptions& options) {
  auto first = source.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && source[first] == '{') {
    json doc;
    try {
      doc = json::parse(source);
    } catch (const json::parse_error& e) {
      parse_fail(describe_position(source, e.byte == 0 ? 0 : e.byte - 1), e.what());
    }
    return load_case_json(doc, options);
  }
  return load_case_matpower(source, options);
}

GridCase load_case_file(const std::string& path, const CaseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Parse, "cannot open case file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  GridCase grid = load_case(buffer.str(), options);
  if (grid.name.empty()) {
    auto slash = path.find_last_of('/');
    std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    grid.name = stem.substr(0, stem.find('.'));
  }
  return grid;
}

json case_to_json(const GridCase& grid, bool include_capacities) {
  json doc;
  doc["name"] = grid.name;
  doc["base_mva"] = grid.base_mva;
  doc["buses"] = json::array();
  for (const auto& b : grid.buses) doc["buses"].push_back({{"id", b.id}, {"load_mw", b.load}});
  doc["generators"] = json::array();
  for (const auto& g : grid.generators) {
    json entry = {{"bus", g.bus}, {"output_mw", g.output}, {"max_mw", g.max_output}};
    if (g.ramp_limit) entry["ramp_mw"] = *g.ramp_limit;
    doc["generators"].push_back(entry);
  }
  doc["lines"] = json::array();
  for (const auto& l : grid.lines) {
    json entry = {{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}, {"x_pu", l.reactance}};
    if (include_capacities || l.rated) entry["capacity_mw"] = l.capacity;
    doc["lines"].push_back(entry);
  }
  return doc;
}

}  // namespace gridattack
