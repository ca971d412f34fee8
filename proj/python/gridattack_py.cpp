#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "gridattack/attack_env.hpp"
#include "gridattack/cli.hpp"
#include "gridattack/defense.hpp"
#include "gridattack/errors.hpp"
#include "gridattack/oracle.hpp"
#include "gridattack/report.hpp"
#include "gridattack/trainer.hpp"

namespace py = pybind11;
using namespace gridattack;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::shared_ptr<const GridCase> load_grid(const std::string& name) {
  return std::make_shared<const GridCase>(load_case_file(cli::case_path(name).string()));
}

GameConfig game_config(std::size_t attackers, std::size_t stages, const std::vector<LineId>& defense) {
  GameConfig g;
  g.attackers = attackers;
  g.stages = stages;
  g.defense = DefenseSet(defense);
  return g;
}

/// Environment handle that keeps its grid alive.
class PyEnv {
 public:
  PyEnv(const std::string& case_name, std::size_t attackers, std::size_t stages, const std::vector<LineId>& defense)
      : env_(load_grid(case_name), game_config(attackers, stages, defense)) {}

  std::vector<int> reset() { return states(env_.reset()); }

  py::tuple step(const std::vector<LineId>& actions) {
    const StepResult r = env_.step(actions);
    return py::make_tuple(states(r.observation), r.reward.per_agent, r.reward.stage_loss_mw, r.done);
  }

  std::size_t num_lines() const { return env_.num_lines(); }
  std::size_t stage() const { return env_.stage(); }
  bool done() const { return env_.done(); }
  double initial_generation() const { return env_.initial_generation(); }

 private:
  static std::vector<int> states(const Observation& o) {
    const auto& v = o.shared().values();
    return std::vector<int>(v.begin(), v.end());
  }

  AttackEnv env_;
};

}  // namespace

PYBIND11_MODULE(gridattack, m) {
  m.doc() = "Cascading-failure attack simulation, multi-agent attacker training and defense planning";
  m.attr("__version__") = cli::kVersion;

  py::register_exception<Error>(m, "GridAttackError", PyExc_RuntimeError);

  m.def(
      "case_summary",
      [](const std::string& name) {
        const auto grid = load_grid(name);
        py::dict d;
        d["name"] = grid->name;
        d["buses"] = grid->num_buses();
        d["lines"] = grid->num_lines();
        d["generators"] = grid->generators.size();
        d["load_mw"] = grid->total_load();
        d["generation_mw"] = grid->total_generation();
        return d;
      },
      py::arg("case"), "Size and totals of a case file or bundled case name.");

  py::class_<PyEnv>(m, "AttackEnv")
      .def(py::init<const std::string&, std::size_t, std::size_t, const std::vector<LineId>&>(), py::arg("case"),
           py::arg("attackers") = 3, py::arg("stages") = 3, py::arg("defense") = std::vector<LineId>{})
      .def("reset", &PyEnv::reset, "Restore the base state; returns the line states.")
      .def("step", &PyEnv::step, py::arg("actions"),
           "Apply one line per attacker; returns (states, rewards, stage_loss_mw, done).")
      .def_property_readonly("num_lines", &PyEnv::num_lines)
      .def_property_readonly("stage", &PyEnv::stage)
      .def_property_readonly("done", &PyEnv::done)
      .def_property_readonly("initial_generation", &PyEnv::initial_generation);

  m.def(
      "oracle",
      [](const std::string& name, std::size_t attackers, std::size_t stages, const std::vector<LineId>& defense) {
        OracleResult r;
        {
          py::gil_scoped_release release;
          r = brute_force_oracle(load_grid(name), game_config(attackers, stages, defense));
        }
        return to_python(oracle_to_json(r));
      },
      py::arg("case"), py::arg("attackers"), py::arg("stages"), py::arg("defense") = std::vector<LineId>{},
      "Exhaustive optimal attack search.");

  m.def(
      "train",
      [](const std::string& name, std::size_t attackers, std::size_t stages, std::size_t episodes, std::uint64_t seed,
         const std::string& method) {
        const auto grid = load_grid(name);
        const GameConfig game = game_config(attackers, stages, {});
        TrainConfig cfg;
        cfg.episodes = episodes;
        cfg.seed = seed;
        cfg.batch = 32;
        cfg.update_period = 10;
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          const GameConfig g = method_game(method, game);
          TrainHooks hooks;
          hooks.method = method;
          const TrainOutput t = method == "sams" ? train_dqn(grid, game, cfg, hooks) : train_maac(grid, g, cfg, hooks);
          AttackEnv env(grid, g);
          const AttackSequence s = execute(TrainedAttacker::from_checkpoint(t.checkpoint), env);
          std::vector<double> returns;
          for (const auto& e : t.log) returns.push_back(e.ret);
          out = {{"returns", returns}, {"updates", t.updates}, {"greedy_lines", s.lines}, {"greedy_loss_mw", s.loss_mw}};
        }
        return to_python(out);
      },
      py::arg("case"), py::arg("attackers") = 2, py::arg("stages") = 2, py::arg("episodes") = 100,
      py::arg("seed") = 0, py::arg("method") = "maac",
      "Train attackers (maac, sams or mass) and execute them greedily.");

  m.def(
      "moving_average",
      [](const std::vector<double>& values, std::size_t window) { return moving_average(values, window); },
      py::arg("values"), py::arg("window") = 200);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli_dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one gridattack subcommand; returns (exit_code, stdout, stderr).");
}
