#include "gridattack/report.hpp"

#include <fstream>
#include <sstream>

#include "gridattack/errors.hpp"

namespace gridattack {

namespace fs = std::filesystem;

namespace {

std::ostringstream csv_stream() {
  std::ostringstream os;
  os.precision(17);
  return os;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Report, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Report, "cannot write " + path.string());
  out << text;
}

nlohmann::json parse_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Report, path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window < 1) fail(ErrorKind::Domain, "window must be positive");
  std::vector<double> out;
  if (values.size() < window) return out;
  double sum = 0.0;
  for (std::size_t k = 0; k < window; ++k) sum += values[k];
  out.push_back(sum / static_cast<double>(window));
  for (std::size_t k = window; k < values.size(); ++k) {
    sum += values[k] - values[k - window];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

std::string moving_average_csv(std::span<const double> returns, std::size_t window) {
  auto os = csv_stream();
  os << "episode,mean_return\n";
  const auto avg = moving_average(returns, window);
  for (std::size_t k = 0; k < avg.size(); ++k) os << k + window - 1 << ',' << avg[k] << '\n';
  return os.str();
}

std::string frequency_csv(const DefensePlan& plan) {
  auto os = csv_stream();
  os << "line,count,frequency,selected\n";
  for (std::size_t l = 0; l < plan.table.frequencies.size(); ++l) {
    const bool selected = std::find(plan.selected.begin(), plan.selected.end(), l) != plan.selected.end();
    os << l << ',' << plan.table.counts.at(l) << ',' << plan.table.frequencies[l] << ',' << (selected ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string stability_csv(const DefensePlan& plan) {
  auto os = csv_stream();
  os << "h,distance\n";
  for (std::size_t k = 0; k < plan.stability_trace.size(); ++k) os << k + 2 << ',' << plan.stability_trace[k] << '\n';
  return os.str();
}

nlohmann::json evaluation_json(const std::vector<SchemeResult>& schemes) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : schemes) {
    rows.push_back({{"scheme", s.name},
                    {"defense", s.defense},
                    {"samples", s.stats.samples},
                    {"n", s.stats.n},
                    {"mean", s.stats.mean},
                    {"stddev", s.stats.stddev},
                    {"ci_low", s.stats.mean - s.stats.half_width},
                    {"ci_high", s.stats.mean + s.stats.half_width},
                    {"half_width", s.stats.half_width}});
  }
  return {{"schemes", rows}, {"confidence", 0.95}};
}

std::string loss_comparison_csv(const nlohmann::json& evaluation) {
  auto os = csv_stream();
  os << "scheme,n,mean_loss_mw,ci_low,ci_high,half_width\n";
  for (const auto& row : evaluation.at("schemes")) {
    os << row.at("scheme").get<std::string>() << ',' << row.at("n").get<std::size_t>() << ','
       << row.at("mean").get<double>() << ',' << row.at("ci_low").get<double>() << ','
       << row.at("ci_high").get<double>() << ',' << row.at("half_width").get<double>() << '\n';
  }
  return os.str();
}

std::vector<std::string> write_report(const fs::path& run_dir, const fs::path& out_dir, std::size_t window) {
  if (!fs::is_directory(run_dir)) fail(ErrorKind::Report, "run directory " + run_dir.string() + " does not exist");
  std::vector<std::string> missing;
  const fs::path manifest = run_dir / "manifest.json";
  if (!fs::exists(manifest)) {
    missing.push_back("manifest.json");
  } else {
    const auto doc = parse_json(manifest);
    if (doc.contains("artifacts")) {
      for (const auto& [key, value] : doc.at("artifacts").items()) {
        if (value.is_string() && !fs::exists(run_dir / value.get<std::string>())) missing.push_back(value.get<std::string>());
      }
    }
  }
  const fs::path log = run_dir / "train_log.jsonl";
  const fs::path plan = run_dir / "defense_plan.json";
  const fs::path eval = run_dir / "evaluation.json";
  if (!fs::exists(log) && !fs::exists(plan) && !fs::exists(eval)) {
    missing.insert(missing.end(), {"train_log.jsonl", "defense_plan.json", "evaluation.json"});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail(ErrorKind::Report, "run " + run_dir.string() + " lacks: " + list);
  }

  fs::create_directories(out_dir);
  std::vector<std::string> written;
  if (fs::exists(log)) {
    std::vector<double> returns;
    std::istringstream in(read_file(log));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        returns.push_back(nlohmann::json::parse(line).at("return").get<double>());
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Report, log.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    write_file(out_dir / "moving_average.csv", moving_average_csv(returns, window));
    written.push_back("moving_average.csv");
  }
  if (fs::exists(plan)) {
    const auto doc = parse_json(plan);
    DefensePlan p;
    try {
      doc.at("selected_lines").get_to(p.selected);
      doc.at("frequencies").get_to(p.table.frequencies);
      doc.at("counts").get_to(p.table.counts);
      doc.at("h").get_to(p.table.h);
      doc.at("stability_trace").get_to(p.stability_trace);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Report, plan.string() + ": " + e.what());
    }
    write_file(out_dir / "frequencies.csv", frequency_csv(p));
    write_file(out_dir / "stability.csv", stability_csv(p));
    written.insert(written.end(), {"frequencies.csv", "stability.csv"});
  }
  if (fs::exists(eval)) {
    try {
      write_file(out_dir / "loss_comparison.csv", loss_comparison_csv(parse_json(eval)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Report, eval.string() + ": " + e.what());
    }
    written.push_back("loss_comparison.csv");
  }
  return written;
}

}  // namespace gridattack
