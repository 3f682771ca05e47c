#pragma once

#include "ofo/controllers.hpp"
#include "ofo/powerflow.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ofo {

/// A closed-loop problem instance: problem data, a plant factory and a start point.
struct Scenario
{
  std::string name;
  ProblemSpec spec;
  /// Each call returns an independent plant (grid plants carry a warm-start cache).
  std::function<std::shared_ptr<Plant>()> make_plant;
  VectorXd u0;
  /// Hyperparameters the scenario was tuned with.
  HyperParams hp;
  /// Output coordinates that receive measurement noise (empty = all).
  std::vector<Index> noisy_outputs;
  /// Fixed measurement to use in place of h(u0) for the first step, if any.
  std::optional<VectorXd> injected_measurement;
};

/// y = u2^3 + u1 - u2 + 0.5, phi = u1^2 - 0.5 u1 + u2^2 - 0.5 u2 + 5 y,
/// U = [-1, 1]^2, Y = [0, 1], u0 = (-0.5, 0.5).
Scenario build_toy_scenario();

enum class AppendixCase { Fig5a, Fig5b };

/// y = 2u^2 + u^3 with -2 <= u <= 0. Fig5a: y <= 1, u0 = -1.31.
/// Fig5b: y <= 1.2, u0 = -4/3, injected measurement 1.22.
Scenario build_appendix_scenario(AppendixCase which);

struct LqOptions
{
  Index input_dim = 4;
  Index output_dim = 3;
  bool quadratic_output_cost = false;
  /// Number of input / output actors (blocks are contiguous).
  Index input_actors = 1;
  Index output_actors = 1;
};

/// Random strictly convex instance with a linear plant y = H u + y0, box
/// input set and box output set containing the image of an interior point.
Scenario random_lq_scenario(std::uint64_t seed, const LqOptions & options = {});

/// Voltage regulation on a distribution feeder. Prosumer buses inject
/// P in [0, 12.5], Q in [-2, 2] at cost 0.1 P + 0.1 P^2 + 0.1 Q^2 (their
/// recorded load is ignored); every other bus is a fixed load, modelled as a
/// singleton input box. Each bus is one input actor owning (P_b, Q_b); one
/// output actor owns y. Voltage magnitudes are boxed to [v_min, v_max],
/// angles are free, and noise (if any) hits magnitudes only.
struct GridScenarioOptions
{
  std::vector<Index> prosumer_buses;  ///< bus ids (1..B)
  SensitivityMode sensitivity = SensitivityMode::PerIterate;
  double v_min = 0.95;
  double v_max = 1.05;
};

Scenario grid_scenario(const GridNetwork & net, const GridScenarioOptions & options);

/// Built-in 15-bus feeder (14 PQ buses, lateral at bus 10) with prosumers at
/// buses 9 and 14 and an undervoltage at the far end under the cold start.
GridNetwork builtin_feeder();
Scenario build_grid_scenario(SensitivityMode mode = SensitivityMode::PerIterate);

/// Names accepted by builtin_scenario() (see experiment.hpp).
std::vector<std::string> builtin_scenario_names();

}  // namespace ofo
