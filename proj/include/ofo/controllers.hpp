#pragma once

#include "ofo/core.hpp"
#include "ofo/subsolver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ofo {

struct HyperParams
{
  double alpha = 0.05;   ///< primal learning rate (projected primal, primal-dual)
  double rho = 10.0;     ///< dual learning rate
  double gamma_u = 1.0;  ///< proximal weight on the input
  double gamma_z = 1.0;  ///< proximal weight on the output target

  void validate() const;
};

enum class ControllerKind { ProjectedPrimal, PrimalDual, PrimeY, PrimeH };

const char * to_string(ControllerKind kind);
ControllerKind controller_from_string(const std::string & name);

/// The projected set U_k was empty. Carries the set and a Farkas certificate.
class InfeasibleLinearization : public Error
{
public:
  InfeasibleLinearization(PolyhedralSet linearized, PolyhedralSet feasible_set, VectorXd certificate);

  /// {u : C_y(h~(u)) <= 0}, rows in canonical output-row order.
  const PolyhedralSet & linearized_output_set() const { return linearized_; }
  /// C_u intersected with the linearized output set.
  const PolyhedralSet & feasible_set() const { return feasible_set_; }
  const VectorXd & certificate() const { return certificate_; }

private:
  PolyhedralSet linearized_;
  PolyhedralSet feasible_set_;
  VectorXd certificate_;
};

struct PrimalState
{
  VectorXd u;
  /// Multipliers of the linearized output rows from the last projection,
  /// divided by 2 alpha; at a fixed point these are the output duals.
  VectorXd output_duals;
};

struct DualizedYState
{
  VectorXd u;
  VectorXd lambda_y;  ///< one per canonical output row, >= 0
};

struct PrimeHState
{
  VectorXd u;
  VectorXd z;     ///< output target, always in C_y
  VectorXd nu_h;  ///< multiplier of y = h(u), sign-free
  /// Multipliers of C_y from the last z-update; output duals at a fixed point.
  VectorXd output_duals;
};

PrimalState init_projected_primal(const ProblemSpec & spec, const VectorXd & u0);
DualizedYState init_dualized_y(const ProblemSpec & spec, const VectorXd & u0);
/// z0 = proj_{C_y}(y0), nu = 0.
PrimeHState init_prime_h(const ProblemSpec & spec, const VectorXd & u0, const VectorXd & y0);

/// Projected primal gradient: u+ = proj_{U_k}(u - alpha (grad phi_u + J' grad phi_y(y))).
PrimalState step_projected_primal(const PrimalState & state, const ProblemSpec & spec, const Plant & plant,
                                  const HyperParams & hp, const Measurement & m);

/// Primal-dual gradient with the output constraints dualized.
DualizedYState step_primal_dual_y(const DualizedYState & state, const ProblemSpec & spec, const Plant & plant,
                                  const HyperParams & hp, const Measurement & m);

/// Proximal step on the linearized Lagrangian with the output constraints dualized.
DualizedYState step_prime_y(const DualizedYState & state, const ProblemSpec & spec, const Plant & plant,
                            const HyperParams & hp, const Measurement & m);

/// Proximal step with y = h(u) dualized: nu, then z, then u.
PrimeHState step_prime_h(const PrimeHState & state, const ProblemSpec & spec, const Plant & plant,
                         const HyperParams & hp, const Measurement & m);

/// lambda+ = max(0, lambda + rho C_y(y)), shared by the dualized-output laws.
VectorXd dual_ascent(const VectorXd & lambda, const PolyhedralSet & output_set, const VectorXd & y, double rho);

// ---------------------------------------------------------------- trajectories

enum class RunStatus { BudgetExhausted, Converged, InfeasibleLinearization };

const char * to_string(RunStatus status);

struct TrajectoryRecord
{
  int k = 0;
  VectorXd u;
  VectorXd y_true;
  VectorXd y_measured;
  VectorXd z;          ///< empty unless PRIME-H
  VectorXd duals;      ///< lambda_y (primal-dual, PRIME-Y), nu_h (PRIME-H), empty otherwise
  VectorXd kkt_duals;  ///< estimate of the output-constraint multipliers
  double phi_u = 0.0;
  double phi_y = 0.0;
  double violation = 0.0;  ///< max(0, C_y(y_true))
  double payments = 0.0;   ///< total realized payments this round (market mode)
};

struct Trajectory
{
  ControllerKind kind = ControllerKind::PrimeH;
  bool market = false;
  std::vector<TrajectoryRecord> records;
  RunStatus status = RunStatus::BudgetExhausted;
  int flagged_at = -1;  ///< iteration at which infeasibility was flagged
};

struct RunOptions
{
  int max_iters = 1000;
  double stop_tol = 1e-10;
  /// Replaces the measured output (not the true one) at k = 0.
  std::optional<VectorXd> initial_measurement;
};

/// Closes the loop: measure, record, step. Stops after max_iters steps, on an
/// infeasible linearization (flagged), or, without noise, when the largest
/// change in any state component is at most stop_tol.
Trajectory run(ControllerKind kind, const ProblemSpec & spec, const Plant & plant, const HyperParams & hp,
               MeasurementNoise & noise, const VectorXd & u0, const RunOptions & options = {});

/// Builds one trajectory record from a measurement; shared with market mode.
TrajectoryRecord make_record(int k, const ProblemSpec & spec, const VectorXd & u, const Measurement & m);

}  // namespace ofo
