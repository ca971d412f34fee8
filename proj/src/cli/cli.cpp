#include "gridattack/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gridattack/attack_env.hpp"
#include "gridattack/defense.hpp"
#include "gridattack/errors.hpp"
#include "gridattack/grid.hpp"
#include "gridattack/nn/checkpoint.hpp"
#include "gridattack/oracle.hpp"
#include "gridattack/report.hpp"
#include "gridattack/trainer.hpp"

#ifndef GRIDATTACK_CONFIG_DIR
#define GRIDATTACK_CONFIG_DIR ""
#endif

namespace gridattack::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kind, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::State, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::State, "write failed for " + path.string());
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path, ErrorKind::Validation);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

std::vector<LineId> parse_lines(const std::string& text) {
  std::vector<LineId> lines;
  if (text.empty() || text == "none") return lines;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) fail(ErrorKind::Validation, "bad line id \"" + item + "\" in \"" + text + "\"");
    lines.push_back(static_cast<LineId>(v));
  }
  return lines;
}

std::string join_lines(const std::vector<LineId>& lines) {
  std::string s;
  for (LineId l : lines) s += (s.empty() ? "" : ",") + std::to_string(l);
  return "{" + s + "}";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Every flag the subcommands accept; unset optionals leave the config alone.
struct Options {
  std::string config_file;
  std::string preset;
  std::optional<std::string> case_name;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  std::optional<std::string> method;
  std::optional<std::size_t> attackers, stages, episodes, batch, update_period, memory;
  std::optional<double> phi;
  std::optional<std::string> defense;

  std::optional<std::size_t> w, max_experiments, repetitions;
  std::size_t parallel = 1;

  std::string checkpoint;
  std::size_t experiment = 0;

  std::vector<std::string> schemes;
  std::string plan_file;
  std::optional<std::string> lines;

  std::string run_dir;
  std::size_t window = 200;

  std::string convert_out;
  bool include_capacities = false;
};

/// Typed view of the effective config document.
void check_method(const std::string& method) {
  if (method != "maac" && method != "sams" && method != "mass") {
    fail(ErrorKind::Validation, "method must be maac, sams or mass, got \"" + method + "\"");
  }
}

json build_config(const Options& o) {
  json cfg = default_config();
  if (!o.preset.empty()) merge_config(cfg, read_json(preset_path(o.preset)), "preset " + o.preset);
  if (!o.config_file.empty()) merge_config(cfg, read_json(o.config_file), o.config_file);
  if (o.case_name) cfg["case"] = *o.case_name;
  if (o.seed) cfg["train"]["seed"] = *o.seed;
  if (o.attackers) cfg["game"]["attackers"] = *o.attackers;
  if (o.stages) cfg["game"]["stages"] = *o.stages;
  if (o.defense) cfg["game"]["defense"] = parse_lines(*o.defense);
  if (o.episodes) cfg["train"]["episodes"] = *o.episodes;
  if (o.batch) cfg["train"]["batch"] = *o.batch;
  if (o.update_period) cfg["train"]["update_period"] = *o.update_period;
  if (o.memory) cfg["train"]["memory"] = *o.memory;
  if (o.phi) cfg["train"]["phi"] = *o.phi;
  if (o.w) cfg["defense"]["w"] = *o.w;
  if (o.max_experiments) cfg["defense"]["max_experiments"] = *o.max_experiments;
  if (o.repetitions) cfg["evaluation"]["repetitions"] = *o.repetitions;
  return cfg;
}

/// Any error raised here is a configuration problem.
Setup resolve(const Options& o) {
  Setup s;
  try {
    s.doc = build_config(o);
    s.case_source = s.doc.at("case").get<std::string>();
    s.case_file = case_path(s.case_source);
    s.case_digest = nn::digest_hex(read_text(s.case_file, ErrorKind::Validation));
    s.grid = std::make_shared<const GridCase>(load_case_file(s.case_file.string()));
    const std::size_t n = s.grid->num_lines();

    s.doc.at("game").get_to(s.game);
    s.game.check();
    s.game.defense.check(n);
    s.doc.at("train").get_to(s.train);
    s.train.check();

    const json& d = s.doc.at("defense");
    s.defense.w = d.at("w").get<std::size_t>();
    s.defense.max_experiments = d.at("max_experiments").get<std::size_t>();
    s.defense.stable_window = d.at("stable_window").get<std::size_t>();
    s.defense.distance_threshold = d.at("distance_threshold").get<double>();
    s.defense.method = d.at("method").get<std::string>();
    check_method(s.defense.method);
    if (s.defense.w > n) fail(ErrorKind::Validation, "defense.w exceeds the line count " + std::to_string(n));
    if (s.defense.max_experiments < 1) fail(ErrorKind::Validation, "defense.max_experiments must be positive");
    s.defense.parallel = std::max<std::size_t>(1, o.parallel);

    const json& e = s.doc.at("evaluation");
    s.repetitions = e.at("repetitions").get<std::size_t>();
    s.eval_method = e.at("method").get<std::string>();
    check_method(s.eval_method);
    s.random_defense = e.at("random_defense").get<std::vector<LineId>>();
    DefenseSet(s.random_defense).check(n);
    if (s.repetitions < 1) fail(ErrorKind::Validation, "evaluation.repetitions must be positive");
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse || e.kind() == ErrorKind::Validation) throw;
    fail(ErrorKind::Validation, e.what());
  }
  return s;
}

}  // namespace

Setup load_preset(const std::string& preset, const std::string& config_file) {
  Options o;
  o.preset = preset;
  o.config_file = config_file;
  return resolve(o);
}

namespace {

fs::path run_directory(const Options& o, const std::string& tag, const std::string& digest) {
  if (!o.out_dir.empty()) return o.out_dir;
  const char* root = std::getenv("GRIDATTACK_ARTIFACT_ROOT");
  return fs::path(root && *root ? root : "runs") / (tag + "-" + digest);
}

/// Run record written next to the artifacts. Only the "wall_clock" member
/// varies between identical runs.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, std::string digest, std::uint64_t seed, json case_id)
      : dir_(std::move(dir)), started_(std::chrono::steady_clock::now()) {
    doc_ = {{"command", std::move(command)},
            {"version", kVersion},
            {"config_digest", std::move(digest)},
            {"seed", seed},
            {"case", std::move(case_id)},
            {"artifacts", json::object()},
            {"status", "running"},
            {"wall_clock", {{"started_utc", utc_now()}}}};
    fs::create_directories(dir_);
  }

  const fs::path& dir() const noexcept { return dir_; }

  void write(const std::string& key, const std::string& file, const std::string& text) {
    write_text(dir_ / file, text);
    doc_["artifacts"][key] = file;
  }
  void reference(const std::string& key, const std::string& file) { doc_["artifacts"][key] = file; }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }

  void finish() {
    doc_["status"] = "ok";
    save();
  }
  void failed(const std::string& stage, const std::exception& e) {
    doc_["status"] = "failed";
    const auto* err = dynamic_cast<const Error*>(&e);
    doc_["failure"] = {{"stage", stage}, {"kind", err ? to_string(err->kind()) : "internal"}, {"message", e.what()}};
    // keep only artifacts that were actually produced
    json kept = json::object();
    for (const auto& [k, v] : doc_["artifacts"].items()) {
      if (fs::exists(dir_ / v.get<std::string>())) kept[k] = v;
    }
    doc_["artifacts"] = kept;
    save();
  }

 private:
  void save() {
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_).count();
    doc_["wall_clock"]["elapsed_ms"] = ms;
    write_text(dir_ / "manifest.json", doc_.dump(2) + "\n");
  }

  fs::path dir_;
  json doc_;
  std::chrono::steady_clock::time_point started_;
};

json case_identity(const Setup& s) {
  return {{"name", s.grid->name}, {"source", s.case_source}, {"digest", s.case_digest}};
}

std::string run_digest(const std::string& tag, const json& config, const json& extra = json::object()) {
  return nn::digest_hex(json{{"command", tag}, {"config", config}, {"extra", extra}}.dump());
}

/// Run `body` under a manifest; runtime failures are recorded and rethrown.
template <class F>
void guarded(Manifest& manifest, const std::string& stage, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    manifest.failed(stage, e);
    throw;
  }
  manifest.finish();
}

std::string format_sequence(const std::vector<JointAction>& seq) {
  std::string s;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (t) s += " ";
    s += "stage" + std::to_string(t + 1) + "=" + join_lines(seq[t]);
  }
  return s;
}

json sequence_json(const AttackSequence& seq) {
  return {{"experiment", seq.experiment},
          {"lines", seq.lines},
          {"stage_loss_mw", seq.stage_loss_mw},
          {"loss_mw", seq.loss_mw}};
}

// ---- subcommands ---------------------------------------------------------

int run_validate(const Options& o, std::ostream& out) {
  Setup s;
  try {
    json cfg = build_config(o);
    s.case_source = cfg.at("case").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("config: ") + e.what());
  }
  const GridCase grid = load_case_file(case_path(s.case_source).string());
  const auto issues = validate_case(grid);
  for (const auto& issue : issues) out << "violation: " << issue << "\n";
  if (!issues.empty()) fail(ErrorKind::Validation, std::to_string(issues.size()) + " invariant violation(s)");
  out << std::setprecision(10) << "case=" << grid.name << " buses=" << grid.num_buses() << " N=" << grid.num_lines()
      << " generators=" << grid.generators.size() << " load_mw=" << grid.total_load()
      << " generation_mw=" << grid.total_generation() << "\n";
  return kOk;
}

int run_convert(const Options& o, std::ostream& out) {
  std::string source;
  try {
    source = build_config(o).at("case").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("config: ") + e.what());
  }
  const GridCase grid = load_case_file(case_path(source).string());
  const fs::path target = o.convert_out;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_text(target, case_to_json(grid, o.include_capacities).dump(2) + "\n");
  out << "wrote " << target.string() << " (" << grid.num_lines() << " lines)\n";
  return kOk;
}

int run_train(const Options& o, std::ostream& out, std::ostream& err) {
  const std::string method = o.method.value_or("maac");
  check_method(method);
  Setup s = resolve(o);
  const std::string digest = run_digest("train-" + method, s.doc);
  Manifest manifest(run_directory(o, "train-" + method, digest), "train --method " + method, digest, s.train.seed,
                    case_identity(s));
  manifest.write("config", "config.json", s.doc.dump(2) + "\n");
  manifest.set("method", method);

  guarded(manifest, "train", [&] {
    const fs::path log_path = manifest.dir() / "train_log.jsonl";
    manifest.reference("train_log", "train_log.jsonl");
    manifest.reference("checkpoint", "checkpoint.bin");
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) fail(ErrorKind::State, "cannot write " + log_path.string());

    std::vector<double> returns;
    const std::size_t every = std::max<std::size_t>(1, s.train.episodes / 20);
    TrainHooks hooks;
    hooks.method = method;
    hooks.checkpoint_path = (manifest.dir() / "checkpoint.bin").string();
    hooks.on_episode = [&](const EpisodeLog& entry) {
      log << episode_log_json(entry, s.train.log_wall_time).dump() << "\n";
      returns.push_back(entry.ret);
      if (!o.quiet && (entry.episode + 1) % every == 0) {
        const auto avg = moving_average(returns, std::min<std::size_t>(200, returns.size()));
        err << "episode " << entry.episode + 1 << "/" << s.train.episodes << " mean_return=" << avg.back()
            << " updates=" << entry.updates << "\n";
      }
    };
    const GameConfig game = method_game(method, s.game);
    TrainOutput result = method == "sams" ? train_dqn(s.grid, s.game, s.train, hooks)
                                          : train_maac(s.grid, game, s.train, hooks);
    log.close();

    const TrainedAttacker attacker = TrainedAttacker::from_checkpoint(result.checkpoint);
    AttackEnv env(s.grid, game);
    const AttackSequence seq = execute(attacker, env, 0);
    const std::size_t tail = std::min<std::size_t>(200, returns.size());
    const json summary = {{"method", method},
                          {"episodes", result.log.size()},
                          {"updates", result.updates},
                          {"stale_priority_updates", result.stale_priority_updates},
                          {"first_window_mean_return", moving_average(returns, tail).front()},
                          {"final_window_mean_return", moving_average(returns, tail).back()},
                          {"greedy", sequence_json(seq)},
                          {"total_generation_mw", s.grid->total_generation()}};
    manifest.write("summary", "summary.json", summary.dump(2) + "\n");
    out << std::setprecision(10) << "run=" << manifest.dir().string() << "\n"
        << "method=" << method << " K=" << game.attackers << " M=" << game.stages << " episodes=" << result.log.size()
        << " updates=" << result.updates << "\n"
        << "final_mean_return=" << summary["final_window_mean_return"].get<double>()
        << " greedy_loss_mw=" << seq.loss_mw << "\n";
  });
  return kOk;
}

int run_attack(const Options& o, std::ostream& out) {
  Setup s = resolve(o);
  nn::Checkpoint ckpt;
  TrainedAttacker attacker;
  GameConfig game;
  try {
    ckpt = nn::Checkpoint::load(o.checkpoint);
    attacker = TrainedAttacker::from_checkpoint(ckpt);
    ckpt.meta.at("config").at("game").get_to(game);
  } catch (const json::exception& e) {
    fail(ErrorKind::Compatibility, std::string("checkpoint metadata: ") + e.what());
  }
  game.attackers = attacker.attackers();
  game.stages = attacker.stages();
  if (o.defense) game.defense = DefenseSet(parse_lines(*o.defense));
  try {
    game.defense.check(s.grid->num_lines());
  } catch (const Error& e) {
    fail(ErrorKind::Validation, e.what());
  }
  const json extra = {{"checkpoint_digest", ckpt.config_digest},
                      {"checkpoint_bytes", nn::digest_hex(ckpt.serialize())},
                      {"defense", game.defense.lines()},
                      {"experiment", o.experiment}};
  const std::string digest = run_digest("attack", s.doc, extra);
  Manifest manifest(run_directory(o, "attack", digest), "attack", digest, s.train.seed, case_identity(s));
  manifest.write("config", "config.json", s.doc.dump(2) + "\n");
  manifest.set("checkpoint", {{"path", o.checkpoint}, {"config_digest", ckpt.config_digest}});
  guarded(manifest, "attack", [&] {
    AttackEnv env(s.grid, game);
    const AttackSequence seq = execute(attacker, env, o.experiment);
    manifest.write("attack_records", "attack.csv", attack_records_csv(std::span(&seq, 1)));
    manifest.write("attack_sequence", "attack.json", sequence_json(seq).dump(2) + "\n");
    out << std::setprecision(10) << "run=" << manifest.dir().string() << "\n";
    for (std::size_t t = 0; t < seq.stage_loss_mw.size(); ++t) {
      JointAction a;
      for (const auto& agent : seq.lines) a.push_back(agent[t]);
      out << "stage" << t + 1 << "=" << join_lines(a) << " loss_mw=" << seq.stage_loss_mw[t] << "\n";
    }
    out << "loss_mw=" << seq.loss_mw << "\n";
  });
  return kOk;
}

int run_defend(const Options& o, std::ostream& out, std::ostream& err) {
  Setup s = resolve(o);
  if (o.method) {
    check_method(*o.method);
    s.defense.method = *o.method;
    s.doc["defense"]["method"] = *o.method;
  }
  const std::string digest = run_digest("defend", s.doc);
  Manifest manifest(run_directory(o, "defend", digest), "defend", digest, s.train.seed, case_identity(s));
  manifest.write("config", "config.json", s.doc.dump(2) + "\n");
  guarded(manifest, "defend", [&] {
    const DefenseRun run = plan_defense(s.grid, s.game, s.train, s.defense, [&](const AttackSequence& seq) {
      if (!o.quiet) err << "experiment " << seq.experiment << " loss_mw=" << seq.loss_mw << "\n";
    });
    manifest.write("attack_records", "attacks.csv", attack_records_csv(run.sequences));
    manifest.write("defense_plan", "defense_plan.json", defense_plan_json(run.plan).dump(2) + "\n");
    out << "run=" << manifest.dir().string() << "\n"
        << "selected_lines=" << join_lines(run.plan.selected) << " h=" << run.plan.table.h
        << " stable=" << (run.plan.stable ? "true" : "false") << "\n";
  });
  return kOk;
}

int run_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  Setup s = resolve(o);
  if (o.method) {
    check_method(*o.method);
    s.eval_method = *o.method;
    s.doc["evaluation"]["method"] = *o.method;
  }
  std::vector<std::pair<std::string, std::vector<LineId>>> schemes;
  std::vector<std::string> names = o.schemes;
  if (names.empty()) {
    names = {"none", "random"};
    if (!o.plan_file.empty()) names.push_back("plan");
    if (o.lines) names.push_back("lines");
  }
  json plan_identity = nullptr;
  for (const auto& name : names) {
    if (name == "none") {
      schemes.emplace_back(name, std::vector<LineId>{});
    } else if (name == "random") {
      schemes.emplace_back(name, s.random_defense);
    } else if (name == "plan") {
      if (o.plan_file.empty()) fail(ErrorKind::Validation, "scheme \"plan\" needs --plan");
      const json plan = read_json(o.plan_file);
      if (!plan.contains("selected_lines")) fail(ErrorKind::Validation, o.plan_file + " has no selected_lines");
      schemes.emplace_back(name, plan.at("selected_lines").get<std::vector<LineId>>());
      plan_identity = plan.at("selected_lines");
    } else if (name == "lines") {
      if (!o.lines) fail(ErrorKind::Validation, "scheme \"lines\" needs --lines");
      schemes.emplace_back(name, parse_lines(*o.lines));
    } else {
      fail(ErrorKind::Validation, "unknown scheme \"" + name + "\"; expected none, random, plan or lines");
    }
    try {
      DefenseSet(schemes.back().second).check(s.grid->num_lines());
    } catch (const Error& e) {
      fail(ErrorKind::Validation, "scheme " + name + ": " + e.what());
    }
  }
  json extra = json::array();
  for (const auto& [name, lines] : schemes) extra.push_back({name, lines});
  const std::string digest = run_digest("evaluate", s.doc, extra);
  Manifest manifest(run_directory(o, "evaluate", digest), "evaluate", digest, s.train.seed, case_identity(s));
  manifest.write("config", "config.json", s.doc.dump(2) + "\n");
  guarded(manifest, "evaluate", [&] {
    std::vector<SchemeResult> results;
    for (const auto& [name, lines] : schemes) {
      if (!o.quiet) err << "evaluating " << name << " " << join_lines(lines) << "\n";
      results.push_back({name, lines,
                         evaluate_defense(s.grid, s.game, s.train, DefenseSet(lines), s.repetitions, s.eval_method,
                                          o.parallel)});
    }
    json doc = evaluation_json(results);
    doc["method"] = s.eval_method;
    doc["repetitions"] = s.repetitions;
    manifest.write("evaluation", "evaluation.json", doc.dump(2) + "\n");
    out << std::setprecision(8) << "run=" << manifest.dir().string() << "\n";
    for (const auto& r : results) {
      out << r.name << " " << join_lines(r.defense) << " mean_loss_mw=" << r.stats.mean << " +/- "
          << r.stats.half_width << " (n=" << r.stats.n << ")\n";
    }
  });
  return kOk;
}

int run_oracle(const Options& o, std::ostream& out) {
  Setup s = resolve(o);
  const std::string digest = run_digest("oracle", s.doc["game"], {{"case", s.case_digest}});
  Manifest manifest(run_directory(o, "oracle", digest), "oracle", digest, s.game.seed, case_identity(s));
  manifest.write("config", "config.json", s.doc.dump(2) + "\n");
  guarded(manifest, "oracle", [&] {
    const OracleResult r = brute_force_oracle(s.grid, s.game);
    manifest.write("oracle", "oracle.json", oracle_to_json(r).dump(2) + "\n");
    out << std::setprecision(10) << "run=" << manifest.dir().string() << "\n"
        << "K=" << s.game.attackers << " M=" << s.game.stages << " defense=" << join_lines(s.game.defense.lines())
        << " sequences=" << r.sequences << "\n"
        << "max_loss_mw=" << r.max_loss_mw << " fraction=" << r.max_loss_mw / r.total_generation_mw
        << " argmax_count=" << r.argmax_count << "\n";
    for (const auto& seq : r.argmax) out << "argmax " << format_sequence(seq) << "\n";
  });
  return kOk;
}

int run_report(const Options& o, std::ostream& out) {
  const fs::path run = o.run_dir;
  const fs::path target = o.out_dir.empty() ? run / "report" : fs::path(o.out_dir);
  std::string source_digest = "";
  if (fs::exists(run / "manifest.json")) {
    try {
      source_digest = read_json(run / "manifest.json").value("config_digest", "");
    } catch (const Error& e) {
      fail(ErrorKind::Report, e.what());
    }
  }
  const std::vector<std::string> files = write_report(run, target, o.window);
  const std::string digest = nn::digest_hex(json{{"source", source_digest}, {"window", o.window}}.dump());
  Manifest manifest(target, "report", digest, 0, nullptr);
  manifest.set("source_run", run.string());
  for (const auto& f : files) manifest.reference(fs::path(f).stem().string(), f);
  manifest.finish();
  out << "report=" << target.string() << "\n";
  for (const auto& f : files) out << "wrote " << f << "\n";
  return kOk;
}

void add_config_flags(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_file, "Config document (JSON) layered over the preset");
  sub->add_option("--preset", o.preset, "Named preset, e.g. ieee14-desk, ieee118-desk, ieee118-full");
  sub->add_option("--case", o.case_name, "Case file (JSON or MATPOWER); bare names resolve to the bundled data");
}

void add_game_flags(CLI::App* sub, Options& o) {
  sub->add_option("--K", o.attackers, "Number of attackers");
  sub->add_option("--M", o.stages, "Number of attack stages");
  sub->add_option("--defense", o.defense, "Comma-separated protected line ids");
}

void add_train_flags(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Training seed");
  sub->add_option("--episodes", o.episodes, "Training episodes");
  sub->add_option("--batch", o.batch, "Minibatch size");
  sub->add_option("--update-period", o.update_period, "Environment steps between updates");
  sub->add_option("--memory", o.memory, "Replay capacity");
  sub->add_option("--phi", o.phi, "Entropy temperature");
}

void add_run_flags(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out_dir, "Run directory (default: $GRIDATTACK_ARTIFACT_ROOT/<command>-<digest>)");
  sub->add_flag("--quiet", o.quiet, "Suppress progress on stderr");
}

}  // namespace

json default_config() {
  json j;
  j["case"] = "ieee14.json";
  j["game"] = GameConfig{};
  j["train"] = TrainConfig{};
  const DefenseOptions d;
  j["defense"] = {{"w", d.w},
                  {"max_experiments", d.max_experiments},
                  {"stable_window", d.stable_window},
                  {"distance_threshold", d.distance_threshold},
                  {"method", d.method}};
  j["evaluation"] = {{"repetitions", 10}, {"method", "maac"}, {"random_defense", json::array()}};
  return j;
}

fs::path preset_path(const std::string& name) {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("GRIDATTACK_CONFIG_DIR"); env && *env) dirs.emplace_back(env);
  if (*GRIDATTACK_CONFIG_DIR) dirs.emplace_back(GRIDATTACK_CONFIG_DIR);
  for (const auto& dir : dirs) {
    const fs::path p = dir / (name + ".json");
    if (fs::exists(p)) return p;
  }
  fail(ErrorKind::Validation, "unknown preset \"" + name + "\"");
}

fs::path case_path(const std::string& name) {
  if (fs::exists(name)) return name;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("GRIDATTACK_DATA_DIR"); env && *env) dirs.emplace_back(env);
  dirs.emplace_back(GRIDATTACK_DATA_DIR);
  for (const auto& dir : dirs) {
    const fs::path p = dir / name;
    if (fs::exists(p)) return p;
  }
  fail(ErrorKind::Validation, "case \"" + name + "\" not found");
}

void merge_config(json& base, const json& layer, const std::string& origin) {
  if (!layer.is_object()) fail(ErrorKind::Validation, origin + ": config must be an object");
  std::function<void(json&, const json&, const std::string&)> merge = [&](json& dst, const json& src,
                                                                          const std::string& path) {
    for (const auto& [key, value] : src.items()) {
      const std::string where = path.empty() ? key : path + "." + key;
      if (!dst.contains(key)) fail(ErrorKind::Validation, origin + ": unknown config key \"" + where + "\"");
      json& slot = dst[key];
      if (slot.is_object()) {
        if (!value.is_object()) fail(ErrorKind::Validation, origin + ": \"" + where + "\" must be an object");
        merge(slot, value, where);
      } else {
        const bool numeric = slot.is_number() && value.is_number();
        if (!numeric && slot.type() != value.type()) {
          fail(ErrorKind::Validation, origin + ": \"" + where + "\" has the wrong type");
        }
        slot = value;
      }
    }
  };
  merge(base, layer, "");
}

}  // namespace gridattack::cli

namespace gridattack {

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli;
  Options o;
  CLI::App app{"Coordinated multistage line-attack training, execution and defense planning", "gridattack"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);

  auto* validate = app.add_subcommand("validate", "Check a case file and print its size");
  validate->add_option("--case", o.case_name, "Case file or bundled case name");
  validate->add_option("--config", o.config_file, "Config document supplying the case");
  validate->add_option("--preset", o.preset, "Named preset supplying the case");

  auto* convert = app.add_subcommand("convert", "Export a case in the JSON schema");
  convert->add_option("--case", o.case_name, "Case file or bundled case name")->required();
  convert->add_option("--out", o.convert_out, "Output JSON file")->required();
  convert->add_flag("--include-capacities", o.include_capacities, "Write derived line ratings as well");

  auto* train = app.add_subcommand("train", "Train attackers and save a checkpoint");
  add_config_flags(train, o);
  add_game_flags(train, o);
  add_train_flags(train, o);
  add_run_flags(train, o);
  train->add_option("--method", o.method, "maac, sams or mass");

  auto* attack = app.add_subcommand("attack", "Execute a trained checkpoint greedily");
  add_config_flags(attack, o);
  attack->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required();
  attack->add_option("--defense", o.defense, "Comma-separated protected line ids");
  attack->add_option("--experiment", o.experiment, "Experiment label in the records");
  add_run_flags(attack, o);

  auto* defend = app.add_subcommand("defend", "Repeat training and execution to pick protected lines");
  add_config_flags(defend, o);
  add_game_flags(defend, o);
  add_train_flags(defend, o);
  add_run_flags(defend, o);
  defend->add_option("--method", o.method, "maac, sams or mass");
  defend->add_option("--W", o.w, "Number of protected lines");
  defend->add_option("--max-experiments", o.max_experiments, "Experiment cap");
  defend->add_option("--parallel", o.parallel, "Concurrent experiments")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Mean loss with a 95% interval under defense schemes");
  add_config_flags(evaluate, o);
  add_game_flags(evaluate, o);
  add_train_flags(evaluate, o);
  add_run_flags(evaluate, o);
  evaluate->add_option("--method", o.method, "maac, sams or mass");
  evaluate->add_option("--scheme", o.schemes, "none, random, plan or lines (repeatable)");
  evaluate->add_option("--plan", o.plan_file, "defense_plan.json from defend");
  evaluate->add_option("--lines", o.lines, "Comma-separated custom defense");
  evaluate->add_option("--repetitions", o.repetitions, "Training repetitions per scheme");
  evaluate->add_option("--parallel", o.parallel, "Concurrent repetitions")->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle", "Exhaustive search for the optimal attack sequence");
  add_config_flags(oracle, o);
  add_game_flags(oracle, o);
  oracle->add_option("--out", o.out_dir, "Run directory");

  auto* report = app.add_subcommand("report", "Write plot-ready tables for a run directory");
  report->add_option("--run", o.run_dir, "Run directory")->required();
  report->add_option("--out", o.out_dir, "Output directory (default: <run>/report)");
  report->add_option("--window", o.window, "Moving-average window")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (validate->parsed()) return run_validate(o, out);
    if (convert->parsed()) return run_convert(o, out);
    if (train->parsed()) return run_train(o, out, err);
    if (attack->parsed()) return run_attack(o, out);
    if (defend->parsed()) return run_defend(o, out, err);
    if (evaluate->parsed()) return run_evaluate(o, out, err);
    if (oracle->parsed()) return run_oracle(o, out);
    if (report->parsed()) return run_report(o, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.kind() == ErrorKind::Parse || e.kind() == ErrorKind::Validation ? kInvalid : kRuntime;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kRuntime;
  }
  err << "usage error: no subcommand\n";
  return kUsage;
}

int cli_dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace gridattack
