#pragma once

#include "ofo/market.hpp"
#include "ofo/scenarios.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ofo {

/// Identifies one closed-loop run: a controller, optionally in market mode.
struct RunVariant
{
  ControllerKind kind = ControllerKind::PrimeH;
  bool market = false;

  /// "projected_primal", "primal_dual", "prime_y", "prime_h", "prime_y_market", "prime_h_market".
  std::string name() const;
  static RunVariant parse(const std::string & name);
};

/// Fully resolved experiment description. Every field has a value after
/// parsing, so the serialized form reproduces the run.
struct ScenarioConfig
{
  std::string name = "experiment";

  /// "builtin" or "grid_file".
  std::string source = "builtin";
  /// One of builtin_scenario_names() when source == "builtin".
  std::string builtin = "toy";
  /// Random LQ instance parameters (builtin "lq_random").
  std::uint64_t lq_seed = 1;
  LqOptions lq;
  /// Grid sources.
  std::string network_file;
  std::vector<Index> prosumer_buses;
  SensitivityMode sensitivity = SensitivityMode::PerIterate;
  double v_min = 0.95;
  double v_max = 1.05;
  /// Replace h(u0) by the scenario's injected measurement at k = 0 (appendix_fig5b).
  bool inject_measurement = false;

  std::vector<RunVariant> controllers;
  HyperParams hp;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int max_iters = 500;
  double stop_tol = 1e-10;
  double feasibility_tol = 1e-3;
  int jitter_window = 100;
  std::string out_dir = "out";
  /// Worker threads for independent runs (0 = one per run).
  int workers = 0;
};

/// Parses and validates a JSON document. Missing optional fields take the
/// scenario's defaults; unknown fields and type errors raise ConfigError
/// with a JSON-pointer path.
ScenarioConfig parse_config(const std::string & json_text);
ScenarioConfig load_config(const std::filesystem::path & path);
/// Resolved configuration as pretty-printed JSON (round-trips through parse_config).
std::string config_to_json(const ScenarioConfig & config);

/// Scenario for a built-in name.
Scenario builtin_scenario(const std::string & name, std::uint64_t lq_seed = 1, const LqOptions & lq = {});
/// Scenario selected by a configuration.
Scenario resolve_scenario(const ScenarioConfig & config);

/// First k from which every later record has violation <= tol; -1 if none.
int iterations_to_feasibility(const Trajectory & traj, double tol);
/// Population standard deviation of ||u^{k+1} - u^k|| over the last `window` steps.
double input_jitter(const Trajectory & traj, int window);

struct RunSummary
{
  std::string variant;
  RunStatus status = RunStatus::BudgetExhausted;
  int flagged_at = -1;
  int iterations = 0;
  int iterations_to_feasibility = -1;
  double max_violation = 0.0;
  double final_violation = 0.0;
  double final_cost = 0.0;
  double final_kkt = 0.0;  ///< NaN when the run carries no multiplier estimate
  double jitter = 0.0;
};

struct RunResult
{
  RunVariant variant;
  Trajectory trajectory;
  std::vector<LedgerEntry> ledger;
  RunSummary summary;
};

struct ExperimentResult
{
  ScenarioConfig config;
  std::vector<RunResult> runs;
  bool any_flagged() const;
};

/// Runs every requested variant with its own plant and a noise stream seeded
/// identically, in parallel.
ExperimentResult run_experiment(const ScenarioConfig & config);

RunSummary summarize(const RunResult & run, const Scenario & scenario, const Plant & plant,
                     const ScenarioConfig & config);

/// Trajectory CSV, schema "ofo-trajectory/1" (see README).
void write_trajectory_csv(std::ostream & out, const Trajectory & traj, const std::string & variant);
void write_summary(std::ostream & out, const ExperimentResult & result);

/// Writes <variant>.csv, <variant>_ledger.csv (market runs), summary.txt and
/// config.json into config.out_dir; each file is written to a temporary and renamed.
void write_outputs(const ExperimentResult & result);

}  // namespace ofo
