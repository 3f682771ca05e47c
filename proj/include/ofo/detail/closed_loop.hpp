#pragma once

// Shared closed-loop driver for the centralized controllers and market mode.

#include "ofo/controllers.hpp"

#include <utility>

namespace ofo::detail {

inline double max_change(const VectorXd & a, const VectorXd & b)
{
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

template <class State, class StepFn, class FillFn, class ChangeFn>
Trajectory closed_loop(ControllerKind kind, const ProblemSpec & spec, const Plant & plant, MeasurementNoise & noise,
                       State state, Measurement m, const RunOptions & options, StepFn step, FillFn fill,
                       ChangeFn change)
{
  Trajectory traj;
  traj.kind = kind;
  for (int k = 0;; ++k) {
    TrajectoryRecord rec = make_record(k, spec, state.u, m);
    fill(rec, state);
    traj.records.push_back(std::move(rec));
    if (k >= options.max_iters) {
      traj.status = RunStatus::BudgetExhausted;
      break;
    }
    State next;
    try {
      next = step(state, m);
    } catch (const InfeasibleLinearization &) {
      traj.status = RunStatus::InfeasibleLinearization;
      traj.flagged_at = k;
      break;
    }
    const bool settled = !noise.active() && change(next, state) <= options.stop_tol;
    state = std::move(next);
    m = measure(plant, state.u, noise);
    if (settled) {
      TrajectoryRecord last = make_record(k + 1, spec, state.u, m);
      fill(last, state);
      traj.records.push_back(std::move(last));
      traj.status = RunStatus::Converged;
      break;
    }
  }
  return traj;
}

}  // namespace ofo::detail
