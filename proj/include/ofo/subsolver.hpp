#pragma once

#include "ofo/core.hpp"

#include <optional>

namespace ofo {

/// min x' Q x + c' x  over  feasible_set, Q symmetric positive definite.
struct QpProblem
{
  MatrixXd Q;
  VectorXd c;
  PolyhedralSet feasible_set;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

const char * to_string(QpStatus status);

struct QpOptions
{
  double feasibility_tol = 1e-11;
  int max_iterations = 10000;
};

struct QpSolution
{
  VectorXd x;
  double objective = 0.0;
  QpStatus status = QpStatus::MaxIterations;
  /// Multipliers of the canonical rows: 2 Q x + c + G' dual = 0 at optimum.
  VectorXd dual;
  /// When Infeasible: y >= 0 with G' y = 0 and h' y < 0.
  VectorXd certificate;
  int iterations = 0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

/// Goldfarb-Idnani dual active-set method. Rows active at `warm_start` are
/// tried first; the minimizer does not depend on the warm start.
QpSolution solve_qp(const QpProblem & p, const std::optional<VectorXd> & warm_start = std::nullopt,
                    const QpOptions & options = {});

/// Euclidean projection; status Infeasible when the set is empty.
QpSolution project(const VectorXd & x, const PolyhedralSet & set,
                   const std::optional<VectorXd> & warm_start = std::nullopt);

/// argmin_x cost(x) + extra_linear' x + (gamma/2) ||x - anchor||^2 over set.
QpSolution prox(const QuadraticCost & cost, const PolyhedralSet & set, double gamma,
                const VectorXd & anchor, const VectorXd & extra_linear,
                const std::optional<VectorXd> & warm_start = std::nullopt);

/// Max of stationarity, primal infeasibility and complementarity of a QP point.
double qp_kkt_residual(const QpProblem & p, const VectorXd & x, const VectorXd & dual);

}  // namespace ofo
