#pragma once

#include "ofo/core.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace ofo {

using Eigen::MatrixXcd;

enum class BusType { Slack, PQ };

struct Bus
{
  Index id = 0;
  BusType type = BusType::PQ;
  double p_load = 0.0;  ///< consumption, p.u. (positive = load)
  double q_load = 0.0;
};

struct Line
{
  Index from = 0;
  Index to = 0;
  double r = 0.0;
  double x = 0.0;
  double shunt_b = 0.0;  ///< total line charging, split evenly between the ends
};

/// Balanced single-phase network with bus 0 as slack at 1.0 p.u., angle 0.
/// PQ buses are numbered 1..B; their index in every B-vector is id - 1.
class GridNetwork
{
public:
  GridNetwork(std::vector<Bus> buses, std::vector<Line> lines, double base_mva = 1.0);

  /// Number of PQ buses B.
  Index pq_count() const { return static_cast<Index>(buses_.size()) - 1; }
  const std::vector<Bus> & buses() const { return buses_; }
  const std::vector<Line> & lines() const { return lines_; }
  double base_mva() const { return base_mva_; }
  const MatrixXcd & admittance() const { return Ybus_; }

  /// Parses the text format documented in README.md.
  static GridNetwork parse(std::istream & in);
  static GridNetwork load(const std::string & path);
  void write(std::ostream & out) const;

private:
  std::vector<Bus> buses_;  // sorted by id
  std::vector<Line> lines_;
  double base_mva_;
  MatrixXcd Ybus_;
};

struct FeederOptions
{
  Index pq_buses = 14;
  double r = 0.004;
  double x = 0.004;
  double p_load = 0.4;
  double q_load = 0.2;
  /// Buses from this index on branch off bus `lateral_root` instead of continuing the main line (0 = no lateral).
  Index lateral_start = 0;
  Index lateral_root = 0;
  double base_mva = 1.0;
};

/// Radial feeder: a main line 0-1-2-... with an optional lateral, uniform segments and loads.
GridNetwork radial_feeder(const FeederOptions & options);

/// Output packing y = (v_1..v_B, theta_1..theta_B).
struct GridState
{
  VectorXd v;
  VectorXd theta;

  VectorXd packed() const;
  static GridState unpack(const VectorXd & y);
  static GridState flat(Index buses);
};

/// Input packing u = (P_1, Q_1, P_2, Q_2, ..., P_B, Q_B), net injections in p.u.
struct InjectionVector
{
  VectorXd P;
  VectorXd Q;

  VectorXd packed() const;
  static InjectionVector unpack(const VectorXd & u);
  /// Net injection equal to minus the bus loads.
  static InjectionVector from_loads(const GridNetwork & net);
};

struct PowerFlowOptions
{
  int max_iterations = 50;
  double tolerance = 1e-10;
};

/// Calculated minus specified injections, (P rows; Q rows) per PQ bus.
VectorXd power_mismatch(const GridNetwork & net, const GridState & state, const InjectionVector & inj);

/// Damped Newton-Raphson from a flat start unless `init` is supplied.
GridState solve_power_flow(const GridNetwork & net, const InjectionVector & inj,
                           const std::optional<GridState> & init = std::nullopt, const PowerFlowOptions & options = {});

/// Polar power-flow Jacobian d(P; Q)/d(theta; v) over the PQ buses.
MatrixXd power_flow_jacobian(const GridNetwork & net, const GridState & state);

/// dy/du in the packing orders of GridState and InjectionVector.
MatrixXd sensitivity(const GridNetwork & net, const GridState & state);

enum class SensitivityMode { PerIterate, FrozenAtNominal };

/// Plant u -> y given by the AC power flow. evaluate() warm-starts from the
/// previous solution; jacobian() is recomputed at every u or frozen at `nominal`.
class GridPlant final : public Plant
{
public:
  GridPlant(GridNetwork net, SensitivityMode mode, const VectorXd & nominal_u);

  Index input_dim() const override { return 2 * net_.pq_count(); }
  Index output_dim() const override { return 2 * net_.pq_count(); }
  const GridNetwork & network() const { return net_; }
  SensitivityMode mode() const { return mode_; }

  GridState state_at(const VectorXd & u) const;

private:
  VectorXd do_evaluate(const VectorXd & u) const override;
  MatrixXd do_jacobian(const VectorXd & u) const override;

  GridNetwork net_;
  SensitivityMode mode_;
  MatrixXd frozen_;
  mutable std::mutex cache_mutex_;
  mutable VectorXd last_u_;
  mutable GridState last_state_;
};

/// Checks that every actor block owns whole buses (both P_b and Q_b) before building the plant.
std::shared_ptr<GridPlant> grid_plant(const GridNetwork & net, const std::vector<IndexBlock> & input_blocks,
                                      SensitivityMode mode, const VectorXd & nominal_u);

/// CSV: bus,v_pu,theta_deg,p_inj_pu,q_inj_pu (one row per PQ bus, slack first).
void write_bus_states_csv(std::ostream & out, const GridNetwork & net, const GridState & state,
                          const InjectionVector & inj);

}  // namespace ofo
