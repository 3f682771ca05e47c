#include "ofo/subsolver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace ofo {

const char * to_string(QpStatus status)
{
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinEigen = 1e-10;
// ||d2|| below this fraction of ||d|| means the new normal is in the span of the active ones.
constexpr double kDependenceTol = 1e-13;

void givens(double a, double b, double & c, double & s, double & h)
{
  h = std::hypot(a, b);
  if (h == 0.0) {
    c = 1.0;
    s = 0.0;
  } else {
    c = a / h;
    s = b / h;
  }
}

void rotate_columns(MatrixXd & M, Index i, Index j, double c, double s)
{
  for (Index k = 0; k < M.rows(); ++k) {
    const double a = M(k, i), b = M(k, j);
    M(k, i) = c * a + s * b;
    M(k, j) = -s * a + c * b;
  }
}

/// Goldfarb-Idnani working data. Rows are stored normalized and in ">=" form
/// a_i' x >= beta_i, i.e. a_i = -G_i/|G_i|, beta_i = -h_i/|G_i|.
class DualActiveSet
{
public:
  DualActiveSet(const MatrixXd & Hessian, const VectorXd & c, const MatrixXd & normals, const VectorXd & offsets)
      : n_(c.size()), a_(normals), beta_(offsets)
  {
    Eigen::LLT<MatrixXd> llt(Hessian);
    if (llt.info() != Eigen::Success) throw NotStrictlyConvex("solve_qp: Cholesky factorization failed");
    J_ = llt.matrixU().solve(MatrixXd::Identity(n_, n_));  // L^{-T}
    R_ = MatrixXd::Zero(n_, n_);
    x_ = llt.solve(-c);
  }

  const VectorXd & x() const { return x_; }
  const std::vector<Index> & active() const { return active_; }
  const VectorXd & multipliers() const { return u_; }

  double slack(Index i) const { return a_.row(i).dot(x_) - beta_(i); }

  bool is_active(Index i) const
  {
    for (Index a : active_)
      if (a == i) return true;
    return false;
  }

  enum class AddResult { Added, Infeasible, Exhausted };

  /// Brings violated row p into the active set. On infeasibility fills in the
  /// certificate weights (in the normalized row space).
  AddResult add(Index p, VectorXd & certificate, int & iterations, int max_iterations)
  {
    double u_p = 0.0;
    double s_p = slack(p);
    VectorXd n_p = a_.row(p).transpose();
    while (true) {
      if (++iterations > max_iterations) return AddResult::Exhausted;
      const Index q = static_cast<Index>(active_.size());
      VectorXd d = J_.transpose() * n_p;
      VectorXd z = J_.rightCols(n_ - q) * d.tail(n_ - q);
      VectorXd r = q > 0 ? VectorXd(R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q)))
                         : VectorXd(0);

      double t1 = kInf;
      Index drop = -1;
      for (Index i = 0; i < q; ++i)
        if (r(i) > 0.0 && u_(i) / r(i) < t1) {
          t1 = u_(i) / r(i);
          drop = i;
        }
      const bool dependent = d.tail(n_ - q).norm() <= kDependenceTol * std::max(1.0, d.norm());
      const double t2 = dependent ? kInf : -s_p / z.dot(n_p);
      const double t = std::min(t1, t2);

      if (t == kInf) {
        certificate = VectorXd::Zero(a_.rows());
        certificate(p) = 1.0;
        for (Index i = 0; i < q; ++i) certificate(active_[static_cast<size_t>(i)]) = std::max(0.0, -r(i));
        return AddResult::Infeasible;
      }

      if (q > 0) u_ -= t * r;
      u_p += t;
      if (t2 == kInf) {
        remove(drop);
        continue;
      }
      x_ += t * z;
      if (t == t2) {
        insert(p, d, u_p);
        return AddResult::Added;
      }
      remove(drop);
      s_p = slack(p);
    }
  }

private:
  void insert(Index p, VectorXd & d, double u_p)
  {
    const Index q = static_cast<Index>(active_.size());
    for (Index j = n_ - 1; j > q; --j) {
      double c, s, h;
      givens(d(j - 1), d(j), c, s, h);
      if (s == 0.0) continue;
      d(j - 1) = h;
      d(j) = 0.0;
      rotate_columns(J_, j - 1, j, c, s);
    }
    R_.col(q).head(q + 1) = d.head(q + 1);
    active_.push_back(p);
    u_.conservativeResize(q + 1);
    u_(q) = u_p;
  }

  void remove(Index l)
  {
    const Index q = static_cast<Index>(active_.size());
    for (Index k = l; k < q - 1; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(q - 1).setZero();
    for (Index j = l; j < q - 1; ++j) {
      double c, s, h;
      givens(R_(j, j), R_(j + 1, j), c, s, h);
      if (s == 0.0) continue;
      for (Index k = j; k < q - 1; ++k) {
        const double a = R_(j, k), b = R_(j + 1, k);
        R_(j, k) = c * a + s * b;
        R_(j + 1, k) = -s * a + c * b;
      }
      rotate_columns(J_, j, j + 1, c, s);
    }
    active_.erase(active_.begin() + l);
    for (Index k = l; k < q - 1; ++k) u_(k) = u_(k + 1);
    u_.conservativeResize(q - 1);
  }

  Index n_;
  const MatrixXd & a_;
  const VectorXd & beta_;
  MatrixXd J_;
  MatrixXd R_;
  VectorXd x_;
  std::vector<Index> active_;
  VectorXd u_ = VectorXd(0);
};

}  // namespace

QpSolution solve_qp(const QpProblem & p, const std::optional<VectorXd> & warm_start, const QpOptions & options)
{
  const Index n = p.c.size();
  if (p.Q.rows() != n || p.Q.cols() != n) throw InvalidDimension("solve_qp: Q must be n x n");
  if (p.feasible_set.dim() != n) throw InvalidDimension("solve_qp: feasible set dimension");
  if (warm_start) require_dim(*warm_start, n, "solve_qp: warm start");

  const MatrixXd Qs = 0.5 * (p.Q + p.Q.transpose());
  QpSolution sol;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Qs, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < kMinEigen) throw NotStrictlyConvex("solve_qp: Q is not positive definite");
  }

  const PolyhedralSet::Rows rows = p.feasible_set.rows();
  const Index m = rows.G.rows();
  VectorXd norms = rows.G.rowwise().norm();
  MatrixXd a(m, n);
  VectorXd beta(m);
  std::vector<bool> usable(static_cast<size_t>(m), true);
  sol.dual = VectorXd::Zero(m);

  for (Index i = 0; i < m; ++i) {
    if (norms(i) <= 1e-14) {
      // 0' x <= h_i is either vacuous or a certificate by itself.
      usable[static_cast<size_t>(i)] = false;
      if (rows.h(i) < -options.feasibility_tol) {
        sol.status = QpStatus::Infeasible;
        sol.certificate = VectorXd::Zero(m);
        sol.certificate(i) = 1.0;
        sol.x = VectorXd::Zero(n);
        return sol;
      }
      a.row(i).setZero();
      beta(i) = 0.0;
      norms(i) = 1.0;
      continue;
    }
    a.row(i) = -rows.G.row(i) / norms(i);
    beta(i) = -rows.h(i) / norms(i);
  }

  std::vector<bool> preferred(static_cast<size_t>(m), false);
  if (warm_start)
    for (Index i = 0; i < m; ++i)
      preferred[static_cast<size_t>(i)] = std::abs(a.row(i).dot(*warm_start) - beta(i)) <= 1e-9;

  DualActiveSet gi(2.0 * Qs, p.c, a, beta);
  int iterations = 0;
  while (true) {
    Index worst = -1;
    double worst_slack = -options.feasibility_tol;
    bool worst_preferred = false;
    for (Index i = 0; i < m; ++i) {
      if (!usable[static_cast<size_t>(i)] || gi.is_active(i)) continue;
      const double s = gi.slack(i);
      if (s >= -options.feasibility_tol) continue;
      const bool pref = preferred[static_cast<size_t>(i)];
      if ((pref && !worst_preferred) || (pref == worst_preferred && s < worst_slack)) {
        worst = i;
        worst_slack = s;
        worst_preferred = pref;
      }
    }
    if (worst < 0) {
      sol.status = QpStatus::Optimal;
      break;
    }
    if (iterations >= options.max_iterations) {
      sol.status = QpStatus::MaxIterations;
      break;
    }
    VectorXd cert;
    const auto added = gi.add(worst, cert, iterations, options.max_iterations);
    if (added == DualActiveSet::AddResult::Infeasible) {
      sol.status = QpStatus::Infeasible;
      sol.certificate = cert.cwiseQuotient(norms);
      break;
    }
    if (added == DualActiveSet::AddResult::Exhausted) {
      sol.status = QpStatus::MaxIterations;
      break;
    }
  }

  sol.x = gi.x();
  sol.iterations = iterations;
  sol.objective = sol.x.dot(Qs * sol.x) + p.c.dot(sol.x);
  const auto & act = gi.active();
  for (size_t k = 0; k < act.size(); ++k)
    sol.dual(act[k]) = gi.multipliers()(static_cast<Index>(k)) / norms(act[k]);
  return sol;
}

QpSolution project(const VectorXd & x, const PolyhedralSet & set, const std::optional<VectorXd> & warm_start)
{
  require_dim(x, set.dim(), "project");
  const Index n = x.size();
  // ||z - x||^2 = z'z - 2 x'z + const
  return solve_qp({MatrixXd::Identity(n, n), -2.0 * x, set}, warm_start);
}

QpSolution prox(const QuadraticCost & cost, const PolyhedralSet & set, double gamma, const VectorXd & anchor,
                const VectorXd & extra_linear, const std::optional<VectorXd> & warm_start)
{
  const Index n = cost.dim();
  if (!(gamma >= 0.0)) throw InvalidArgument("prox: gamma must be >= 0");
  require_dim(anchor, n, "prox: anchor");
  if (set.dim() != n) throw InvalidDimension("prox: set dimension");
  VectorXd c = cost.c() - gamma * anchor;
  if (extra_linear.size() > 0) {
    require_dim(extra_linear, n, "prox: extra linear term");
    c += extra_linear;
  }
  MatrixXd Q = cost.Q() + 0.5 * gamma * MatrixXd::Identity(n, n);
  return solve_qp({std::move(Q), std::move(c), set}, warm_start);
}

double qp_kkt_residual(const QpProblem & p, const VectorXd & x, const VectorXd & dual)
{
  const PolyhedralSet::Rows rows = p.feasible_set.rows();
  require_dim(dual, rows.G.rows(), "qp_kkt_residual: dual");
  const VectorXd g = rows.G * x - rows.h;
  if (x.size() == 0) return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
  double res = (2.0 * (0.5 * (p.Q + p.Q.transpose())) * x + p.c + rows.G.transpose() * dual).cwiseAbs().maxCoeff();
  for (Index i = 0; i < g.size(); ++i) {
    res = std::max(res, g(i));
    res = std::max(res, -dual(i));
    res = std::max(res, std::abs(dual(i) * g(i)));
  }
  return res;
}

}  // namespace ofo
