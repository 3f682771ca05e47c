#include "ofo/core.hpp"
#include "ofo/subsolver.hpp"

#include <algorithm>
#include <cmath>

namespace ofo {

double kkt_residual(const ProblemSpec & spec, const Plant & plant, const VectorXd & u, const VectorXd & duals)
{
  require_dim(u, spec.input_dim, "kkt_residual: u");
  const PolyhedralSet::Rows rows = spec.output_set.rows();
  require_dim(duals, rows.G.rows(), "kkt_residual: duals");
  if (duals.size() > 0 && duals.minCoeff() < 0.0) throw InvalidDual("kkt_residual: duals must be nonnegative");

  const VectorXd y = plant.evaluate(u);
  const MatrixXd J = plant.jacobian(u);
  const VectorXd grad = spec.input_cost.gradient(u) +
                        J.transpose() * (spec.output_cost.gradient(y) + rows.G.transpose() * duals);

  // Natural residual: zero iff -grad lies in the normal cone of C_u at u.
  const QpSolution step = project(u - grad, spec.input_set, u);
  double residual = step.optimal() ? (u - step.x).cwiseAbs().maxCoeff() : INFINITY;
  if (u.size() == 0) residual = 0.0;
  residual = std::max(residual, spec.input_set.max_violation(u));

  const VectorXd g = rows.G * y - rows.h;
  for (Index i = 0; i < g.size(); ++i) {
    residual = std::max(residual, g(i));
    residual = std::max(residual, std::abs(duals(i) * g(i)));
  }
  return residual;
}

}  // namespace ofo
