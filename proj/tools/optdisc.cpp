// optdisc command line: train, eval, plan, sweep, render, oracle-check.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optdisc/optdisc.hpp"

namespace {

using namespace optdisc;

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    const auto dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw Error(Errc::InvalidConfig, "--set expects section.key=value, got '" + item + "'");
    }
    apply_config_key(cfg, item.substr(0, dot), item.substr(dot + 1, eq - dot - 1), item.substr(eq + 1));
  }
  validate(cfg);
}

ExperimentConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  apply_overrides(cfg, overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Option discovery with learned interest functions: training, planning and analysis"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_path;
  std::string builtin;
  std::string map = "fourroom";
  std::size_t episodes = 500;
  double cost = 0.2;
  std::uint64_t seed = 0;
  std::size_t fixtures = 20;
  std::vector<std::size_t> render_which;

  auto* train = app.add_subcommand("train", "train one run per seed and write curves and run files");
  train->add_option("-c,--config", config_path, "experiment config (INI)");
  train->add_option("--set", overrides, "override, e.g. learner.k=8");

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a saved run");
  eval->add_option("-r,--run", run_path, "run file")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--cost", cost, "per-option cost in the compound return");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* plan = app.add_subcommand("plan", "option-value iteration with a run's options or a built-in set");
  auto* plan_run_opt = plan->add_option("-r,--run", run_path, "run file");
  auto* plan_builtin_opt = plan->add_option("--builtin", builtin, "built-in option set: primitives | hallway");
  plan_run_opt->excludes(plan_builtin_opt);
  plan->add_option("-c,--config", config_path, "config for built-in planning");
  plan->add_option("--set", overrides, "override, e.g. plan.model=exact");
  plan->add_option("--seed", seed, "seed for built-in planning");

  auto* sweep = app.add_subcommand("sweep", "train and plan over a {k} x {cbar} x {eta} x seeds grid");
  sweep->add_option("-c,--config", config_path, "experiment config with a [sweep] section")->required();
  sweep->add_option("--set", overrides, "override, e.g. experiment.jobs=4");

  auto* render = app.add_subcommand("render", "ASCII panels of option policies, terminations and interests");
  auto* render_run_opt = render->add_option("-r,--run", run_path, "run file");
  auto* render_builtin_opt = render->add_option("--builtin", builtin, "built-in option set: primitives | hallway");
  render_run_opt->excludes(render_builtin_opt);
  render->add_option("--map", map, "map for built-in sets");
  render->add_option("--option", render_which, "option indices (default: every adjustable option)");

  auto* oracle = app.add_subcommand("oracle-check", "exact gradient against finite differences on random fixtures");
  oracle->add_option("--fixtures", fixtures, "number of fixtures");
  oracle->add_option("--seed", seed, "fixture seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) {
      const ExperimentConfig cfg = build_config(config_path, overrides);
      const TrainSummary s = cmd_train(cfg);
      for (const auto& r : s.runs) {
        std::cout << r.run_id << " objective " << fmt_double(r.objective_estimate()) << '\n';
      }
      std::cout << "wrote " << (s.out_dir / "curve.csv").string() << '\n';
    } else if (*eval) {
      const RunRecord run = load_run(run_path);
      std::cout << eval_result_to_json(cmd_eval(run, episodes, cost, seed)).dump(2) << '\n';
    } else if (*plan) {
      PlanOutcome out;
      if (!run_path.empty()) {
        const RunRecord run = load_run(run_path);
        ExperimentConfig cfg = run.config;
        apply_overrides(cfg, overrides);
        out = cmd_plan(run, cfg, output_dir(cfg));
      } else if (!builtin.empty()) {
        const ExperimentConfig cfg = build_config(config_path, overrides);
        out = cmd_plan_builtin(builtin, cfg, output_dir(cfg), seed);
      } else {
        throw Error(Errc::InvalidConfig, "plan needs --run or --builtin");
      }
      std::cout << plan_outcome_to_json(out).dump(2) << '\n';
    } else if (*sweep) {
      const ExperimentConfig cfg = build_config(config_path, overrides);
      const SweepSummary s = cmd_sweep(cfg, &std::cerr);
      for (std::size_t i = 0; i < s.ranking.size(); ++i) {
        const auto& r = s.ranking[i];
        std::cout << i + 1 << ". k=" << r.k << " cbar=" << fmt_double(r.cbar) << " eta=" << fmt_double(r.eta)
                  << " score " << fmt_double(r.score) << '\n';
      }
      std::cout << "spearman " << fmt_double(s.spearman) << ", failures " << s.failures.size() << '\n';
      if (!s.failures.empty() && s.scatter.empty()) return 2;
    } else if (*render) {
      std::vector<OptionId> which(render_which.begin(), render_which.end());
      if (!run_path.empty()) {
        const RunRecord run = load_run(run_path);
        std::cout << render_options(run_grid(run), OptionSet::from_params(run.state.tables), which);
      } else if (!builtin.empty()) {
        const GridSpec grid = config_grid(map);
        std::cout << render_options(grid, builtin_options(builtin, grid), which);
      } else {
        throw Error(Errc::InvalidConfig, "render needs --run or --builtin");
      }
    } else if (*oracle) {
      const OracleCheck r = cmd_oracle_check(fixtures, seed);
      std::cout << nlohmann::json{{"fixtures", r.fixtures}, {"maxRelError", r.max_rel_error}, {"passed", r.passed}}
                       .dump(2)
                << '\n';
      if (!r.passed) return 2;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
