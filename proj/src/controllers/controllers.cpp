#include "ofo/controllers.hpp"
#include "ofo/detail/closed_loop.hpp"

#include <algorithm>
#include <cmath>

namespace ofo {

void HyperParams::validate() const
{
  if (!(alpha > 0.0)) throw InvalidArgument("HyperParams: alpha must be > 0");
  if (!(rho > 0.0)) throw InvalidArgument("HyperParams: rho must be > 0");
  if (!(gamma_u >= 0.0)) throw InvalidArgument("HyperParams: gamma_u must be >= 0");
  if (!(gamma_z >= 0.0)) throw InvalidArgument("HyperParams: gamma_z must be >= 0");
}

const char * to_string(ControllerKind kind)
{
  switch (kind) {
    case ControllerKind::ProjectedPrimal: return "projected_primal";
    case ControllerKind::PrimalDual: return "primal_dual";
    case ControllerKind::PrimeY: return "prime_y";
    case ControllerKind::PrimeH: return "prime_h";
  }
  return "unknown";
}

ControllerKind controller_from_string(const std::string & name)
{
  for (auto k : {ControllerKind::ProjectedPrimal, ControllerKind::PrimalDual, ControllerKind::PrimeY,
                 ControllerKind::PrimeH})
    if (name == to_string(k)) return k;
  throw InvalidArgument("unknown controller '" + name + "'");
}

const char * to_string(RunStatus status)
{
  switch (status) {
    case RunStatus::BudgetExhausted: return "budget_exhausted";
    case RunStatus::Converged: return "converged";
    case RunStatus::InfeasibleLinearization: return "infeasible_linearization";
  }
  return "unknown";
}

InfeasibleLinearization::InfeasibleLinearization(PolyhedralSet linearized, PolyhedralSet feasible_set,
                                                 VectorXd certificate)
    : Error("linearized feasible set U_k is empty"),
      linearized_(std::move(linearized)),
      feasible_set_(std::move(feasible_set)),
      certificate_(std::move(certificate))
{}

namespace {

void check_step_inputs(const VectorXd & u, const ProblemSpec & spec, const Plant & plant, const Measurement & m)
{
  require_dim(u, spec.input_dim, "controller step: u");
  require_dim(m.y, spec.output_dim, "controller step: measurement");
  if (plant.input_dim() != spec.input_dim || plant.output_dim() != spec.output_dim)
    throw InvalidDimension("controller step: plant does not match the problem dimensions");
}

VectorXd solved(const QpSolution & sol, const char * what)
{
  if (!sol.optimal()) throw Error(std::string(what) + ": subproblem " + to_string(sol.status));
  return sol.x;
}

}  // namespace

VectorXd dual_ascent(const VectorXd & lambda, const PolyhedralSet & output_set, const VectorXd & y, double rho)
{
  return (lambda + rho * output_set.constraint_values(y)).cwiseMax(0.0);
}

PrimalState init_projected_primal(const ProblemSpec & spec, const VectorXd & u0)
{
  require_dim(u0, spec.input_dim, "init: u0");
  return {u0, VectorXd::Zero(spec.output_set.row_count())};
}

DualizedYState init_dualized_y(const ProblemSpec & spec, const VectorXd & u0)
{
  require_dim(u0, spec.input_dim, "init: u0");
  return {u0, VectorXd::Zero(spec.output_set.row_count())};
}

PrimeHState init_prime_h(const ProblemSpec & spec, const VectorXd & u0, const VectorXd & y0)
{
  require_dim(u0, spec.input_dim, "init: u0");
  require_dim(y0, spec.output_dim, "init: y0");
  VectorXd z0 = solved(project(y0, spec.output_set), "init_prime_h: projection onto C_y");
  return {u0, std::move(z0), VectorXd::Zero(spec.output_dim), VectorXd::Zero(spec.output_set.row_count())};
}

PrimalState step_projected_primal(const PrimalState & state, const ProblemSpec & spec, const Plant & plant,
                                  const HyperParams & hp, const Measurement & m)
{
  check_step_inputs(state.u, spec, plant, m);
  const AffineMap lin = linearize(plant, state.u, m.y);
  const VectorXd grad = spec.input_cost.gradient(state.u) + lin.J.transpose() * spec.output_cost.gradient(m.y);
  const VectorXd target = state.u - hp.alpha * grad;

  PolyhedralSet lin_set = linearized_output_set(lin, spec.output_set);
  PolyhedralSet U_k = spec.input_set.intersect(lin_set);
  const QpSolution sol = project(target, U_k, state.u);
  if (sol.status == QpStatus::Infeasible)
    throw InfeasibleLinearization(std::move(lin_set), std::move(U_k), sol.certificate);

  PrimalState next;
  next.u = solved(sol, "projected primal");
  // Projection stationarity: 2 (u+ - target) + G' mu = 0, so mu / (2 alpha) plays the role of lambda.
  next.output_duals = sol.dual.segment(spec.input_set.A().rows(), lin_set.A().rows()) / (2.0 * hp.alpha);
  return next;
}

DualizedYState step_primal_dual_y(const DualizedYState & state, const ProblemSpec & spec, const Plant & plant,
                                  const HyperParams & hp, const Measurement & m)
{
  check_step_inputs(state.u, spec, plant, m);
  require_dim(state.lambda_y, spec.output_set.row_count(), "primal-dual: lambda_y");
  DualizedYState next;
  next.lambda_y = dual_ascent(state.lambda_y, spec.output_set, m.y, hp.rho);

  const MatrixXd J = plant.jacobian(state.u);
  const auto rows = spec.output_set.rows();
  const VectorXd grad =
      spec.input_cost.gradient(state.u) +
      J.transpose() * (spec.output_cost.gradient(m.y) + rows.G.transpose() * next.lambda_y);
  next.u = solved(project(state.u - hp.alpha * grad, spec.input_set, state.u), "primal-dual");
  return next;
}

DualizedYState step_prime_y(const DualizedYState & state, const ProblemSpec & spec, const Plant & plant,
                            const HyperParams & hp, const Measurement & m)
{
  check_step_inputs(state.u, spec, plant, m);
  require_dim(state.lambda_y, spec.output_set.row_count(), "PRIME-Y: lambda_y");
  DualizedYState next;
  next.lambda_y = dual_ascent(state.lambda_y, spec.output_set, m.y, hp.rho);

  // Y~(u) = phi_u(u) + phi_y(w + J u) + lambda' (G (w + J u) - h),  w = y_k - J u_k
  const MatrixXd J = plant.jacobian(state.u);
  const auto rows = spec.output_set.rows();
  const MatrixXd & Qy = spec.output_cost.Q();
  const VectorXd w = m.y - J * state.u;
  const Index n = spec.input_dim;

  MatrixXd Q = spec.input_cost.Q() + 0.5 * hp.gamma_u * MatrixXd::Identity(n, n);
  VectorXd c = spec.input_cost.c() - hp.gamma_u * state.u;
  VectorXd dual_price = spec.output_cost.c() + rows.G.transpose() * next.lambda_y;
  if (!spec.output_cost.is_linear()) {
    Q += J.transpose() * Qy * J;
    dual_price += 2.0 * (Qy * w);
  }
  c += J.transpose() * dual_price;
  next.u = solved(solve_qp({std::move(Q), std::move(c), spec.input_set}, state.u), "PRIME-Y");
  return next;
}

PrimeHState step_prime_h(const PrimeHState & state, const ProblemSpec & spec, const Plant & plant,
                         const HyperParams & hp, const Measurement & m)
{
  check_step_inputs(state.u, spec, plant, m);
  require_dim(state.z, spec.output_dim, "PRIME-H: z");
  require_dim(state.nu_h, spec.output_dim, "PRIME-H: nu_h");
  const Index p = spec.output_dim;

  PrimeHState next;
  next.nu_h = state.nu_h + hp.rho * (m.y - state.z);

  // f(z) = phi_y(z) - z' nu+ + (rho/2) ||y - z||^2, proximal weight gamma_z around z_k
  const QuadraticCost augmented(spec.output_cost.Q() + 0.5 * hp.rho * MatrixXd::Identity(p, p),
                                spec.output_cost.c() - hp.rho * m.y);
  const QpSolution z_step = prox(augmented, spec.output_set, hp.gamma_z, state.z, -next.nu_h, state.z);
  next.z = solved(z_step, "PRIME-H z-update");
  next.output_duals = z_step.dual;

  const MatrixXd J = plant.jacobian(state.u);
  next.u = solved(prox(spec.input_cost, spec.input_set, hp.gamma_u, state.u, J.transpose() * next.nu_h, state.u),
                  "PRIME-H u-update");
  return next;
}

// ---------------------------------------------------------------- run loop

TrajectoryRecord make_record(int k, const ProblemSpec & spec, const VectorXd & u, const Measurement & m)
{
  TrajectoryRecord r;
  r.k = k;
  r.u = u;
  r.y_true = m.y_true;
  r.y_measured = m.y;
  r.phi_u = spec.input_cost.value(u);
  r.phi_y = spec.output_cost.value(m.y_true);
  r.violation = spec.output_set.max_violation(m.y_true);
  return r;
}


Trajectory run(ControllerKind kind, const ProblemSpec & spec, const Plant & plant, const HyperParams & hp,
               MeasurementNoise & noise, const VectorXd & u0, const RunOptions & options)
{
  hp.validate();
  if (options.max_iters < 0) throw InvalidArgument("run: max_iters must be >= 0");
  Measurement m0 = measure(plant, u0, noise);
  if (options.initial_measurement) {
    require_dim(*options.initial_measurement, spec.output_dim, "run: initial measurement");
    m0.y = *options.initial_measurement;
  }

  switch (kind) {
    case ControllerKind::ProjectedPrimal:
      return detail::closed_loop(
          kind, spec, plant, noise, init_projected_primal(spec, u0), std::move(m0), options,
          [&](const PrimalState & s, const Measurement & m) { return step_projected_primal(s, spec, plant, hp, m); },
          [](TrajectoryRecord & r, const PrimalState & s) { r.kkt_duals = s.output_duals; },
          [](const PrimalState & a, const PrimalState & b) { return detail::max_change(a.u, b.u); });
    case ControllerKind::PrimalDual:
    case ControllerKind::PrimeY: {
      auto step = [&, kind](const DualizedYState & s, const Measurement & m) {
        return kind == ControllerKind::PrimalDual ? step_primal_dual_y(s, spec, plant, hp, m)
                                                  : step_prime_y(s, spec, plant, hp, m);
      };
      return detail::closed_loop(
          kind, spec, plant, noise, init_dualized_y(spec, u0), std::move(m0), options, step,
          [](TrajectoryRecord & r, const DualizedYState & s) {
            r.duals = s.lambda_y;
            r.kkt_duals = s.lambda_y;
          },
          [](const DualizedYState & a, const DualizedYState & b) {
            return std::max(detail::max_change(a.u, b.u), detail::max_change(a.lambda_y, b.lambda_y));
          });
    }
    case ControllerKind::PrimeH: {
      PrimeHState s0 = init_prime_h(spec, u0, m0.y);
      return detail::closed_loop(
          kind, spec, plant, noise, std::move(s0), std::move(m0), options,
          [&](const PrimeHState & s, const Measurement & m) { return step_prime_h(s, spec, plant, hp, m); },
          [](TrajectoryRecord & r, const PrimeHState & s) {
            r.z = s.z;
            r.duals = s.nu_h;
            r.kkt_duals = s.output_duals;
          },
          [](const PrimeHState & a, const PrimeHState & b) {
            return std::max({detail::max_change(a.u, b.u), detail::max_change(a.z, b.z), detail::max_change(a.nu_h, b.nu_h)});
          });
    }
  }
  throw InvalidArgument("run: unknown controller kind");
}

}  // namespace ofo
