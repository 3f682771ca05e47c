#pragma once

#include "ofo/errors.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace ofo {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Absolute tolerance used for every set-membership test.
inline constexpr double kMembershipTol = 1e-8;

/// f(x) = x' Q x + c' x + d  (no 1/2 factor), Q symmetric PSD.
class QuadraticCost
{
public:
  QuadraticCost() = default;
  QuadraticCost(MatrixXd Q, VectorXd c, double d = 0.0);

  static QuadraticCost zero(Index n);
  static QuadraticCost linear(VectorXd c, double d = 0.0);

  Index dim() const { return c_.size(); }
  const MatrixXd & Q() const { return Q_; }
  const VectorXd & c() const { return c_; }
  double d() const { return d_; }

  /// True when Q is exactly zero.
  bool is_linear() const;

  double value(const VectorXd & x) const;
  VectorXd gradient(const VectorXd & x) const;

  /// Restriction to the coordinates in `block`; throws InvalidArgument if the
  /// cost couples `block` with the remaining coordinates.
  QuadraticCost restrict_to(const std::vector<Index> & block) const;

private:
  MatrixXd Q_;
  VectorXd c_;
  double d_ = 0.0;
};

/// { x : A x <= b, lower <= x <= upper }. Missing bounds are +-infinity.
///
/// The canonical row form (`rows()`) stacks, in this order: the rows of A,
/// one row +e_i for every finite upper bound (ascending i), one row -e_i for
/// every finite lower bound (ascending i). Every multiplier vector in the
/// toolkit (QP duals, lambda_y, KKT duals) is indexed by that order.
class PolyhedralSet
{
public:
  PolyhedralSet() = default;
  PolyhedralSet(MatrixXd A, VectorXd b, VectorXd lower, VectorXd upper);

  static PolyhedralSet whole_space(Index n);
  static PolyhedralSet box(VectorXd lower, VectorXd upper);
  static PolyhedralSet halfspaces(MatrixXd A, VectorXd b);
  static PolyhedralSet nonnegative_orthant(Index n);

  Index dim() const { return lower_.size(); }
  const MatrixXd & A() const { return A_; }
  const VectorXd & b() const { return b_; }
  const VectorXd & lower() const { return lower_; }
  const VectorXd & upper() const { return upper_; }

  /// Canonical row form G x <= h.
  struct Rows
  {
    MatrixXd G;
    VectorXd h;
  };
  Rows rows() const;
  Index row_count() const;

  /// Row residuals G x - h of the canonical form (positive = violated).
  VectorXd constraint_values(const VectorXd & x) const;
  /// max(0, max_i (G x - h)_i).
  double max_violation(const VectorXd & x) const;
  bool contains(const VectorXd & x, double tol = kMembershipTol) const;

  /// Intersection: rows are concatenated (this first), boxes are tightened.
  PolyhedralSet intersect(const PolyhedralSet & other) const;

  /// Restriction to `block`; throws InvalidArgument if a row of A touches
  /// coordinates both inside and outside the block.
  PolyhedralSet restrict_to(const std::vector<Index> & block) const;
  /// Canonical row index in this set of every canonical row of restrict_to(block).
  std::vector<Index> restricted_row_indices(const std::vector<Index> & block) const;

private:
  MatrixXd A_ = MatrixXd(0, 0);
  VectorXd b_ = VectorXd(0);
  VectorXd lower_ = VectorXd(0);
  VectorXd upper_ = VectorXd(0);
};

/// Steady-state input-output map y = h(u) with a queryable Jacobian.
///
/// jacobian() returns J with shape output_dim x input_dim, row i = dh_i/du.
/// Implementations must tolerate concurrent const calls.
class Plant
{
public:
  virtual ~Plant() = default;

  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;

  VectorXd evaluate(const VectorXd & u) const;
  MatrixXd jacobian(const VectorXd & u) const;

protected:
  virtual VectorXd do_evaluate(const VectorXd & u) const = 0;
  virtual MatrixXd do_jacobian(const VectorXd & u) const = 0;
};

/// y = H u + offset.
class LinearPlant final : public Plant
{
public:
  LinearPlant(MatrixXd H, VectorXd offset);

  Index input_dim() const override { return H_.cols(); }
  Index output_dim() const override { return H_.rows(); }

private:
  VectorXd do_evaluate(const VectorXd & u) const override { return H_ * u + offset_; }
  MatrixXd do_jacobian(const VectorXd &) const override { return H_; }

  MatrixXd H_;
  VectorXd offset_;
};

/// Plant from a pair of callables.
class FunctionPlant final : public Plant
{
public:
  using EvalFn = std::function<VectorXd(const VectorXd &)>;
  using JacFn = std::function<MatrixXd(const VectorXd &)>;

  FunctionPlant(Index input_dim, Index output_dim, EvalFn eval, JacFn jac);

  Index input_dim() const override { return m_; }
  Index output_dim() const override { return p_; }

private:
  VectorXd do_evaluate(const VectorXd & u) const override { return eval_(u); }
  MatrixXd do_jacobian(const VectorXd & u) const override { return jac_(u); }

  Index m_;
  Index p_;
  EvalFn eval_;
  JacFn jac_;
};

/// h~(u) = base + J (u - anchor).
struct AffineMap
{
  VectorXd base;
  VectorXd anchor;
  MatrixXd J;

  VectorXd apply(const VectorXd & u) const;
};

AffineMap linearize(const Plant & plant, const VectorXd & u_k, const VectorXd & y_k);

/// { u : h~(u) in output_set } written as rows in input space.
PolyhedralSet linearized_output_set(const AffineMap & map, const PolyhedralSet & output_set);

using IndexBlock = std::vector<Index>;

/// Data of the actor-partitioned problem
///   min phi_u(u) + phi_y(y)  s.t.  u in C_u, y in C_y, y = h(u).
struct ProblemSpec
{
  Index input_dim = 0;
  Index output_dim = 0;
  QuadraticCost input_cost;
  QuadraticCost output_cost;
  PolyhedralSet input_set;
  PolyhedralSet output_set;
  std::vector<IndexBlock> input_blocks;
  std::vector<IndexBlock> output_blocks;

  /// Checks dimensions and that blocks partition the coordinates disjointly.
  /// Empty block lists are replaced by a single block owning everything.
  void validate();

  double objective(const VectorXd & u, const VectorXd & y) const
  {
    return input_cost.value(u) + output_cost.value(y);
  }
};

IndexBlock full_block(Index n);

/// Additive Gaussian measurement noise with a private, seeded generator.
class MeasurementNoise
{
public:
  explicit MeasurementNoise(double sigma = 0.0, std::uint64_t seed = 0,
                            std::vector<Index> noisy_outputs = {});

  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  bool active() const { return sigma_ > 0.0; }

  /// Returns y_true plus noise on the selected coordinates (all when the
  /// selection is empty). With sigma = 0 the input is returned unchanged.
  VectorXd corrupt(const VectorXd & y_true);

private:
  double sigma_;
  std::uint64_t seed_;
  std::vector<Index> noisy_outputs_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// One sampled output: the true plant output and what the controller sees.
struct Measurement
{
  VectorXd y_true;
  VectorXd y;
};

Measurement measure(const Plant & plant, const VectorXd & u, MeasurementNoise & noise);

/// Max of (a) natural stationarity residual ||u - proj_Cu(u - grad L)||_inf,
/// (b) max output-constraint violation at h(u), (c) max |lambda_i g_i(h(u))|,
/// for  min phi_u(u) + phi_y(h(u)) s.t. u in C_u, C_y(h(u)) <= 0.
/// `duals` are indexed by the canonical rows of the output set.
double kkt_residual(const ProblemSpec & spec, const Plant & plant, const VectorXd & u,
                    const VectorXd & duals);

void require_dim(const VectorXd & v, Index n, const char * what);

}  // namespace ofo
