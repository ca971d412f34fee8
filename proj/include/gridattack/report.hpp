#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gridattack/defense.hpp"

namespace gridattack {

/// Trailing means over every full window: values.size() - window + 1
/// entries, empty when there are fewer values than the window.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

std::string moving_average_csv(std::span<const double> returns, std::size_t window);
std::string frequency_csv(const DefensePlan& plan);
std::string stability_csv(const DefensePlan& plan);

struct SchemeResult {
  std::string name;
  std::vector<LineId> defense;
  LossStats stats;
};

nlohmann::json evaluation_json(const std::vector<SchemeResult>& schemes);
std::string loss_comparison_csv(const nlohmann::json& evaluation);

/// Read the artifacts of a run directory and write plot-ready tables into
/// out_dir. Returns the names of the files written. Throws Error{Report}
/// listing absent inputs when nothing usable is found or when the manifest
/// references missing files.
std::vector<std::string> write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                                      std::size_t window = 200);

}  // namespace gridattack
