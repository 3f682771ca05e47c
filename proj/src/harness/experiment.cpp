#include "ofo/experiment.hpp"

#include "ofo/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

namespace ofo {

using nlohmann::json;

namespace {

constexpr const char * kTrajectorySchema = "ofo-trajectory/1";

const char * to_string(SensitivityMode mode)
{
  return mode == SensitivityMode::PerIterate ? "per_iterate" : "frozen_at_nominal";
}

/// Reads the members of one JSON object, tracking which were consumed.
class ObjectReader
{
public:
  ObjectReader(const json & value, std::string path) : value_(value), path_(std::move(path))
  {
    if (!value_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string child(const std::string & key) const { return path_ + "/" + key; }

  const json * find(const std::string & key)
  {
    seen_.insert(key);
    const auto it = value_.find(key);
    return it == value_.end() ? nullptr : &*it;
  }

  void read(const std::string & key, double & out)
  {
    if (const json * v = find(key)) {
      if (!v->is_number()) throw ConfigError(child(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(child(key), "must be finite");
    }
  }

  void read(const std::string & key, bool & out)
  {
    if (const json * v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const std::string & key, std::string & out)
  {
    if (const json * v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  template <class Int>
  void read_integer(const std::string & key, Int & out, long long min_value)
  {
    if (const json * v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      if (v->is_number_unsigned()) {
        const auto u = v->get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
          throw ConfigError(child(key), "out of range");
        out = static_cast<Int>(u);
      } else {
        const auto s = v->get<long long>();
        if (s < min_value) throw ConfigError(child(key), "must be >= " + std::to_string(min_value));
        out = static_cast<Int>(s);
      }
    }
  }

  void finish() const
  {
    for (const auto & item : value_.items())
      if (!seen_.count(item.key())) throw ConfigError(child(item.key()), "unknown field");
  }

  std::string where() const { return path_.empty() ? "/" : path_; }

private:
  const json & value_;
  std::string path_;
  std::set<std::string> seen_;
};

HyperParams default_hp(const ScenarioConfig & c)
{
  if (c.source == "builtin") return builtin_scenario(c.builtin, c.lq_seed, c.lq).hp;
  return HyperParams{};
}

void check_positive(double value, const std::string & path, bool allow_zero)
{
  if (allow_zero ? !(value >= 0.0) : !(value > 0.0))
    throw ConfigError(path, allow_zero ? "must be >= 0" : "must be > 0");
}

void validate_config(const ScenarioConfig & c)
{
  if (c.source != "builtin" && c.source != "grid_file")
    throw ConfigError("/problem/source", "must be \"builtin\" or \"grid_file\"");
  if (c.source == "builtin") {
    const auto names = builtin_scenario_names();
    if (std::find(names.begin(), names.end(), c.builtin) == names.end())
      throw ConfigError("/problem/builtin", "unknown builtin '" + c.builtin + "'");
  } else if (c.network_file.empty()) {
    throw ConfigError("/problem/network", "grid_file source needs a network file");
  }
  if (c.lq.input_dim < 1) throw ConfigError("/problem/input_dim", "must be >= 1");
  if (c.lq.output_dim < 1) throw ConfigError("/problem/output_dim", "must be >= 1");
  if (c.lq.input_actors < 1 || c.lq.input_actors > c.lq.input_dim)
    throw ConfigError("/problem/input_actors", "must be between 1 and input_dim");
  if (c.lq.output_actors < 1 || c.lq.output_actors > c.lq.output_dim)
    throw ConfigError("/problem/output_actors", "must be between 1 and output_dim");
  if (!(c.v_min < c.v_max)) throw ConfigError("/problem/v_max", "must exceed v_min");
  if (c.controllers.empty()) throw ConfigError("/controllers", "at least one controller is required");
  for (size_t i = 0; i < c.controllers.size(); ++i)
    for (size_t j = 0; j < i; ++j)
      if (c.controllers[i].name() == c.controllers[j].name())
        throw ConfigError("/controllers/" + std::to_string(i), "duplicate controller");
  check_positive(c.hp.alpha, "/hyperparameters/alpha", false);
  check_positive(c.hp.rho, "/hyperparameters/rho", false);
  check_positive(c.hp.gamma_u, "/hyperparameters/gamma_u", true);
  check_positive(c.hp.gamma_z, "/hyperparameters/gamma_z", true);
  check_positive(c.noise_sigma, "/noise/sigma", true);
  if (c.max_iters < 0) throw ConfigError("/max_iters", "must be >= 0");
  check_positive(c.feasibility_tol, "/metrics/feasibility_tol", false);
  if (c.jitter_window < 1) throw ConfigError("/metrics/jitter_window", "must be >= 1");
  if (c.workers < 0) throw ConfigError("/workers", "must be >= 0");
  if (c.out_dir.empty()) throw ConfigError("/output/dir", "must not be empty");
}

/// Scenario-dependent checks: the problem must build and market variants must be admissible.
void validate_against_scenario(const ScenarioConfig & c, const Scenario & s)
{
  if (c.inject_measurement && !s.injected_measurement)
    throw ConfigError("/problem/inject_measurement", "scenario '" + s.name + "' has no injected measurement");
  for (size_t i = 0; i < c.controllers.size(); ++i) {
    if (!c.controllers[i].market) continue;
    const MarketVariant v = c.controllers[i].kind == ControllerKind::PrimeY ? MarketVariant::PrimeY
                                                                             : MarketVariant::PrimeH;
    try {
      make_market(s.spec, v);
    } catch (const Error & e) {
      throw ConfigError("/controllers/" + std::to_string(i), e.what());
    }
  }
}

std::string fmt(double x)
{
  std::ostringstream s;
  s << std::setprecision(12) << x;
  return s.str();
}

void write_atomically(const std::filesystem::path & path, const std::string & content)
{
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string RunVariant::name() const { return std::string(to_string(kind)) + (market ? "_market" : ""); }

RunVariant RunVariant::parse(const std::string & name)
{
  const std::string suffix = "_market";
  RunVariant v;
  std::string base = name;
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    v.market = true;
    base.resize(base.size() - suffix.size());
  }
  v.kind = controller_from_string(base);
  if (v.market && v.kind != ControllerKind::PrimeY && v.kind != ControllerKind::PrimeH)
    throw InvalidArgument("market mode exists for prime_y and prime_h only");
  return v;
}

ScenarioConfig parse_config(const std::string & json_text)
{
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error & e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  ScenarioConfig c;
  ObjectReader root(doc, "");
  root.read("name", c.name);

  if (const json * p = root.find("problem")) {
    ObjectReader r(*p, "/problem");
    r.read("source", c.source);
    r.read("builtin", c.builtin);
    r.read_integer("seed", c.lq_seed, 0);
    r.read_integer("input_dim", c.lq.input_dim, 1);
    r.read_integer("output_dim", c.lq.output_dim, 1);
    r.read_integer("input_actors", c.lq.input_actors, 1);
    r.read_integer("output_actors", c.lq.output_actors, 1);
    r.read("quadratic_output_cost", c.lq.quadratic_output_cost);
    r.read("network", c.network_file);
    if (const json * buses = r.find("prosumer_buses")) {
      if (!buses->is_array()) throw ConfigError("/problem/prosumer_buses", "expected an array of bus ids");
      for (size_t i = 0; i < buses->size(); ++i) {
        const json & b = (*buses)[i];
        if (!b.is_number_integer() || b.get<long long>() < 1)
          throw ConfigError("/problem/prosumer_buses/" + std::to_string(i), "expected a bus id >= 1");
        c.prosumer_buses.push_back(b.get<Index>());
      }
    }
    std::string mode = to_string(c.sensitivity);
    r.read("sensitivity", mode);
    if (mode == "per_iterate")
      c.sensitivity = SensitivityMode::PerIterate;
    else if (mode == "frozen_at_nominal")
      c.sensitivity = SensitivityMode::FrozenAtNominal;
    else
      throw ConfigError("/problem/sensitivity", "must be \"per_iterate\" or \"frozen_at_nominal\"");
    r.read("v_min", c.v_min);
    r.read("v_max", c.v_max);
    r.read("inject_measurement", c.inject_measurement);
    r.finish();
  }

  if (const json * list = root.find("controllers")) {
    if (!list->is_array()) throw ConfigError("/controllers", "expected an array of controller names");
    for (size_t i = 0; i < list->size(); ++i) {
      const json & v = (*list)[i];
      const std::string path = "/controllers/" + std::to_string(i);
      if (!v.is_string()) throw ConfigError(path, "expected a controller name");
      try {
        c.controllers.push_back(RunVariant::parse(v.get<std::string>()));
      } catch (const InvalidArgument & e) {
        throw ConfigError(path, e.what());
      }
    }
  } else {
    throw ConfigError("/controllers", "required field missing");
  }

  // Scenario-tuned defaults, then explicit overrides.
  validate_config(c);
  c.hp = default_hp(c);
  if (const json * h = root.find("hyperparameters")) {
    ObjectReader r(*h, "/hyperparameters");
    r.read("alpha", c.hp.alpha);
    r.read("rho", c.hp.rho);
    r.read("gamma_u", c.hp.gamma_u);
    r.read("gamma_z", c.hp.gamma_z);
    r.finish();
  }
  if (const json * n = root.find("noise")) {
    ObjectReader r(*n, "/noise");
    r.read("sigma", c.noise_sigma);
    r.read_integer("seed", c.seed, 0);
    r.finish();
  }
  root.read_integer("max_iters", c.max_iters, 0);
  root.read("stop_tol", c.stop_tol);
  if (const json * m = root.find("metrics")) {
    ObjectReader r(*m, "/metrics");
    r.read("feasibility_tol", c.feasibility_tol);
    r.read_integer("jitter_window", c.jitter_window, 1);
    r.finish();
  }
  if (const json * o = root.find("output")) {
    ObjectReader r(*o, "/output");
    r.read("dir", c.out_dir);
    r.finish();
  }
  root.read_integer("workers", c.workers, 0);
  root.finish();
  validate_config(c);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config file '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  ScenarioConfig c = parse_config(text.str());
  if (!c.network_file.empty() && std::filesystem::path(c.network_file).is_relative())
    c.network_file = std::filesystem::absolute(path.parent_path() / c.network_file).lexically_normal().string();
  return c;
}

std::string config_to_json(const ScenarioConfig & c)
{
  json problem = {{"source", c.source}};
  if (c.source == "builtin") problem["builtin"] = c.builtin;
  if (c.source == "builtin" && c.builtin == "lq_random") {
    problem["seed"] = c.lq_seed;
    problem["input_dim"] = c.lq.input_dim;
    problem["output_dim"] = c.lq.output_dim;
    problem["input_actors"] = c.lq.input_actors;
    problem["output_actors"] = c.lq.output_actors;
    problem["quadratic_output_cost"] = c.lq.quadratic_output_cost;
  }
  const bool grid = c.source == "grid_file" || c.builtin == "grid_feeder";
  if (c.source == "grid_file") problem["network"] = c.network_file;
  if (grid) {
    problem["prosumer_buses"] = c.prosumer_buses;
    problem["sensitivity"] = to_string(c.sensitivity);
    problem["v_min"] = c.v_min;
    problem["v_max"] = c.v_max;
  }
  problem["inject_measurement"] = c.inject_measurement;

  json controllers = json::array();
  for (const auto & v : c.controllers) controllers.push_back(v.name());
  json doc = {
      {"name", c.name},
      {"problem", problem},
      {"controllers", controllers},
      {"hyperparameters", {{"alpha", c.hp.alpha}, {"rho", c.hp.rho}, {"gamma_u", c.hp.gamma_u}, {"gamma_z", c.hp.gamma_z}}},
      {"noise", {{"sigma", c.noise_sigma}, {"seed", c.seed}}},
      {"max_iters", c.max_iters},
      {"stop_tol", c.stop_tol},
      {"metrics", {{"feasibility_tol", c.feasibility_tol}, {"jitter_window", c.jitter_window}}},
      {"output", {{"dir", c.out_dir}}},
      {"workers", c.workers},
  };
  return doc.dump(2) + "\n";
}

Scenario builtin_scenario(const std::string & name, std::uint64_t lq_seed, const LqOptions & lq)
{
  if (name == "toy") return build_toy_scenario();
  if (name == "appendix_fig5a") return build_appendix_scenario(AppendixCase::Fig5a);
  if (name == "appendix_fig5b") return build_appendix_scenario(AppendixCase::Fig5b);
  if (name == "grid_feeder") return build_grid_scenario();
  if (name == "lq_random") return random_lq_scenario(lq_seed, lq);
  throw InvalidArgument("unknown builtin scenario '" + name + "'");
}

Scenario resolve_scenario(const ScenarioConfig & c)
{
  Scenario s;
  try {
    if (c.source == "grid_file" || c.builtin == "grid_feeder") {
      GridScenarioOptions o;
      o.prosumer_buses = c.prosumer_buses;
      o.sensitivity = c.sensitivity;
      o.v_min = c.v_min;
      o.v_max = c.v_max;
      if (c.source == "grid_file") {
        s = grid_scenario(GridNetwork::load(c.network_file), o);
        s.name = std::filesystem::path(c.network_file).stem().string();
      } else {
        if (o.prosumer_buses.empty()) o.prosumer_buses = {9, 14};
        s = grid_scenario(builtin_feeder(), o);
        s.name = "grid_feeder";
      }
    } else {
      s = builtin_scenario(c.builtin, c.lq_seed, c.lq);
    }
  } catch (const ConfigError &) {
    throw;
  } catch (const Error & e) {
    throw ConfigError("/problem", e.what());
  }
  validate_against_scenario(c, s);
  return s;
}

int iterations_to_feasibility(const Trajectory & traj, double tol)
{
  int first = -1;
  for (const auto & r : traj.records) {
    if (r.violation > tol)
      first = -1;
    else if (first < 0)
      first = r.k;
  }
  return first;
}

double input_jitter(const Trajectory & traj, int window)
{
  const auto & recs = traj.records;
  if (recs.size() < 2) return 0.0;
  const size_t steps = std::min(recs.size() - 1, static_cast<size_t>(std::max(window, 1)));
  std::vector<double> d;
  for (size_t i = recs.size() - steps; i < recs.size(); ++i) d.push_back((recs[i].u - recs[i - 1].u).norm());
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(d.size()));
}

bool ExperimentResult::any_flagged() const
{
  return std::any_of(runs.begin(), runs.end(),
                     [](const RunResult & r) { return r.trajectory.status == RunStatus::InfeasibleLinearization; });
}

RunSummary summarize(const RunResult & run, const Scenario & scenario, const Plant & plant, const ScenarioConfig & c)
{
  RunSummary s;
  s.variant = run.variant.name();
  const Trajectory & t = run.trajectory;
  s.status = t.status;
  s.flagged_at = t.flagged_at;
  s.iterations = t.records.empty() ? 0 : t.records.back().k;
  s.iterations_to_feasibility = iterations_to_feasibility(t, c.feasibility_tol);
  for (const auto & r : t.records) s.max_violation = std::max(s.max_violation, r.violation);
  if (!t.records.empty()) {
    const auto & last = t.records.back();
    s.final_violation = last.violation;
    s.final_cost = last.phi_u + last.phi_y;
    s.final_kkt = last.kkt_duals.size() == scenario.spec.output_set.row_count()
                      ? kkt_residual(scenario.spec, plant, last.u, last.kkt_duals)
                      : std::numeric_limits<double>::quiet_NaN();
  }
  s.jitter = input_jitter(t, c.jitter_window);
  return s;
}

ExperimentResult run_experiment(const ScenarioConfig & config)
{
  validate_config(config);
  const Scenario scenario = resolve_scenario(config);
  ExperimentResult result;
  result.config = config;
  result.runs.resize(config.controllers.size());

  RunOptions options;
  options.max_iters = config.max_iters;
  options.stop_tol = config.stop_tol;
  if (config.inject_measurement) options.initial_measurement = scenario.injected_measurement;

  auto execute = [&](size_t i) {
    RunResult & out = result.runs[i];
    out.variant = config.controllers[i];
    const auto plant = scenario.make_plant();
    MeasurementNoise noise(config.noise_sigma, config.seed, scenario.noisy_outputs);
    if (out.variant.market) {
      const MarketVariant v = out.variant.kind == ControllerKind::PrimeY ? MarketVariant::PrimeY : MarketVariant::PrimeH;
      MarketRun m = run_market(v, scenario.spec, *plant, config.hp, noise, scenario.u0, options);
      out.trajectory = std::move(m.trajectory);
      out.ledger = std::move(m.ledger);
    } else {
      out.trajectory = run(out.variant.kind, scenario.spec, *plant, config.hp, noise, scenario.u0, options);
    }
    out.summary = summarize(out, scenario, *plant, config);
  };

  const size_t n = result.runs.size();
  const size_t workers = config.workers == 0 ? n : std::min(n, static_cast<size_t>(config.workers));
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::future<void>> pool;
  for (size_t w = 0; w < workers; ++w)
    pool.push_back(std::async(std::launch::async, [&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          execute(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    }));
  for (auto & f : pool) f.get();
  for (const auto & e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

void write_trajectory_csv(std::ostream & out, const Trajectory & traj, const std::string & variant)
{
  std::ostringstream s;
  s << std::setprecision(17);
  s << "# schema: " << kTrajectorySchema << "\n";
  const TrajectoryRecord * first = traj.records.empty() ? nullptr : &traj.records.front();
  auto columns = [&](const char * prefix, Index count) {
    for (Index i = 0; i < count; ++i) s << ',' << prefix << i;
  };
  const Index nu = first ? first->u.size() : 0, ny = first ? first->y_true.size() : 0;
  const Index nz = first ? first->z.size() : 0, nd = first ? first->duals.size() : 0;
  const Index nk = first ? first->kkt_duals.size() : 0;
  s << "variant,k,phi_u,phi_y,cost,violation,payments";
  columns("u_", nu);
  columns("y_true_", ny);
  columns("y_meas_", ny);
  columns("z_", nz);
  columns("dual_", nd);
  columns("kkt_dual_", nk);
  s << "\n";
  auto values = [&](const VectorXd & v, Index count) {
    for (Index i = 0; i < count; ++i) s << ',' << (i < v.size() ? v(i) : std::numeric_limits<double>::quiet_NaN());
  };
  for (const auto & r : traj.records) {
    s << variant << ',' << r.k << ',' << r.phi_u << ',' << r.phi_y << ',' << r.phi_u + r.phi_y << ',' << r.violation
      << ',' << r.payments;
    values(r.u, nu);
    values(r.y_true, ny);
    values(r.y_measured, ny);
    values(r.z, nz);
    values(r.duals, nd);
    values(r.kkt_duals, nk);
    s << "\n";
  }
  s << "# status: " << to_string(traj.status);
  if (traj.flagged_at >= 0) s << " flagged_at=" << traj.flagged_at;
  s << "\n";
  out << s.str();
}

void write_summary(std::ostream & out, const ExperimentResult & result)
{
  const ScenarioConfig & c = result.config;
  std::ostringstream s;
  s << "experiment: " << c.name << "\n";
  s << "problem: " << (c.source == "builtin" ? c.builtin : c.network_file) << "\n";
  s << "noise_sigma: " << fmt(c.noise_sigma) << "  seed: " << c.seed << "\n";
  s << "hyperparameters: alpha=" << fmt(c.hp.alpha) << " rho=" << fmt(c.hp.rho) << " gamma_u=" << fmt(c.hp.gamma_u)
    << " gamma_z=" << fmt(c.hp.gamma_z) << "\n";
  s << "feasibility_tol: " << fmt(c.feasibility_tol) << "  jitter_window: " << c.jitter_window << "\n\n";
  s << std::left << std::setw(18) << "variant" << std::setw(26) << "status" << std::right << std::setw(8) << "iters"
    << std::setw(12) << "feasible_at" << std::setw(14) << "max_viol" << std::setw(14) << "final_viol"
    << std::setw(16) << "final_cost" << std::setw(14) << "final_kkt" << std::setw(14) << "jitter" << "\n";
  for (const auto & run : result.runs) {
    const RunSummary & r = run.summary;
    std::string status = to_string(r.status);
    if (r.flagged_at >= 0) status += "@" + std::to_string(r.flagged_at);
    s << std::left << std::setw(18) << r.variant << std::setw(26) << status << std::right << std::setw(8)
      << r.iterations << std::setw(12) << r.iterations_to_feasibility << std::scientific << std::setprecision(5)
      << std::setw(14) << r.max_violation << std::setw(14) << r.final_violation << std::setw(16) << r.final_cost
      << std::setw(14) << r.final_kkt << std::setw(14) << r.jitter << std::defaultfloat << "\n";
  }
  out << s.str();
}

void write_outputs(const ExperimentResult & result)
{
  const std::filesystem::path dir(result.config.out_dir);
  std::filesystem::create_directories(dir);
  for (const auto & run : result.runs) {
    std::ostringstream traj;
    write_trajectory_csv(traj, run.trajectory, run.variant.name());
    write_atomically(dir / (run.variant.name() + ".csv"), traj.str());
    if (run.variant.market) {
      std::ostringstream ledger;
      write_ledger_csv(ledger, run.ledger);
      write_atomically(dir / (run.variant.name() + "_ledger.csv"), ledger.str());
    }
  }
  std::ostringstream summary;
  write_summary(summary, result);
  write_atomically(dir / "summary.txt", summary.str());
  write_atomically(dir / "config.json", config_to_json(result.config));
}

}  // namespace ofo
