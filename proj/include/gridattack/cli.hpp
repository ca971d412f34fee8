#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridattack/defense.hpp"

namespace gridattack::cli {

/// Exit statuses; each error class maps to one value.
enum ExitCode : int {
  kOk = 0,
  kRuntime = 1,
  kUsage = 2,
  kInvalid = 3,
};

inline constexpr const char* kVersion = "0.1.0";

/// Built-in defaults for every config section.
nlohmann::json default_config();

/// Resolve a preset name to its file. Searches $GRIDATTACK_CONFIG_DIR and
/// then the source tree's configs directory.
std::filesystem::path preset_path(const std::string& name);

/// Resolve a case argument: an existing path is used as is, otherwise the
/// name is looked up in $GRIDATTACK_DATA_DIR and the bundled data directory.
std::filesystem::path case_path(const std::string& name);

/// Effective configuration: the case plus typed views of every section.
struct Setup {
  nlohmann::json doc;
  std::string case_source;
  std::filesystem::path case_file;
  std::string case_digest;
  std::shared_ptr<const GridCase> grid;
  GameConfig game;
  TrainConfig train;
  DefenseOptions defense;
  std::size_t repetitions = 10;
  std::string eval_method = "maac";
  std::vector<LineId> random_defense;
};

/// Defaults layered with a named preset and an optional config file.
/// Throws Error{Parse} or Error{Validation}.
Setup load_preset(const std::string& preset, const std::string& config_file = "");

/// Merge `layer` into `base`, rejecting keys that the defaults do not know.
/// Throws Error{Validation} naming the offending key.
void merge_config(nlohmann::json& base, const nlohmann::json& layer, const std::string& origin);

}  // namespace gridattack::cli

namespace gridattack {

/// Run one subcommand. `args` excludes the program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, char** argv);

}  // namespace gridattack
