#include "ofo/errors.hpp"
#include "ofo/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct Overrides
{
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> max_iters;
};

ofo::ScenarioConfig load(const std::string & path, const Overrides & o)
{
  ofo::ScenarioConfig c = ofo::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.max_iters) {
    if (*o.max_iters < 0) throw ofo::ConfigError("/max_iters", "must be >= 0");
    c.max_iters = *o.max_iters;
  }
  return c;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Online feedback optimization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  auto add_overrides = [&](CLI::App * cmd) {
    cmd->add_option("config", config_path, "Experiment configuration (JSON)")->required();
    cmd->add_option("--seed", overrides.seed, "Noise seed");
    cmd->add_option("--out-dir", overrides.out_dir, "Output directory");
    cmd->add_option("--max-iters", overrides.max_iters, "Iteration budget per run");
  };

  CLI::App * run_cmd = app.add_subcommand("run", "Run every controller of a configuration and write outputs");
  add_overrides(run_cmd);
  CLI::App * validate_cmd = app.add_subcommand("validate", "Check a configuration and print it fully resolved");
  add_overrides(validate_cmd);
  CLI::App * list_cmd = app.add_subcommand("list-builtins", "List built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_cmd->parsed()) {
      for (const auto & name : ofo::builtin_scenario_names()) std::cout << name << "\n";
      return 0;
    }
    const ofo::ScenarioConfig config = load(config_path, overrides);
    ofo::resolve_scenario(config);
    if (validate_cmd->parsed()) {
      std::cout << ofo::config_to_json(config);
      return 0;
    }
    const ofo::ExperimentResult result = ofo::run_experiment(config);
    ofo::write_outputs(result);
    ofo::write_summary(std::cout, result);
    std::cout << "outputs written to " << config.out_dir << "\n";
    return result.any_flagged() ? kExitInfeasible : 0;
  } catch (const ofo::ConfigError & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
