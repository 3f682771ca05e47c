#include "ofo/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ofo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string dims(Index got, Index want)
{
  std::ostringstream os;
  os << "got " << got << ", expected " << want;
  return os.str();
}

bool in_block(const std::vector<bool> & mask, Index i) { return mask[static_cast<size_t>(i)]; }

std::vector<bool> block_mask(const IndexBlock & block, Index n)
{
  std::vector<bool> mask(static_cast<size_t>(n), false);
  for (Index i : block) {
    if (i < 0 || i >= n) throw InvalidArgument("block index out of range");
    mask[static_cast<size_t>(i)] = true;
  }
  return mask;
}

}  // namespace

void require_dim(const VectorXd & v, Index n, const char * what)
{
  if (v.size() != n) throw InvalidDimension(std::string(what) + ": " + dims(v.size(), n));
}

IndexBlock full_block(Index n)
{
  IndexBlock b(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) b[static_cast<size_t>(i)] = i;
  return b;
}

// ---------------------------------------------------------------- QuadraticCost

QuadraticCost::QuadraticCost(MatrixXd Q, VectorXd c, double d) : Q_(std::move(Q)), c_(std::move(c)), d_(d)
{
  const Index n = c_.size();
  if (Q_.rows() != n || Q_.cols() != n) throw InvalidDimension("QuadraticCost: Q must be n x n with n = len(c)");
  const double scale = 1.0 + Q_.cwiseAbs().maxCoeff();
  if (n > 0 && (Q_ - Q_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("QuadraticCost: Q must be symmetric");
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Q_ + Q_.transpose()), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw InvalidArgument("QuadraticCost: Q must be PSD");
  }
}

QuadraticCost QuadraticCost::zero(Index n) { return {MatrixXd::Zero(n, n), VectorXd::Zero(n), 0.0}; }

QuadraticCost QuadraticCost::linear(VectorXd c, double d)
{
  const Index n = c.size();
  return {MatrixXd::Zero(n, n), std::move(c), d};
}

bool QuadraticCost::is_linear() const { return Q_.size() == 0 || (Q_.array() == 0.0).all(); }

double QuadraticCost::value(const VectorXd & x) const
{
  require_dim(x, dim(), "QuadraticCost::value");
  return x.dot(Q_ * x) + c_.dot(x) + d_;
}

VectorXd QuadraticCost::gradient(const VectorXd & x) const
{
  require_dim(x, dim(), "QuadraticCost::gradient");
  return 2.0 * (Q_ * x) + c_;
}

QuadraticCost QuadraticCost::restrict_to(const IndexBlock & block) const
{
  const auto mask = block_mask(block, dim());
  for (Index i = 0; i < dim(); ++i)
    for (Index j = 0; j < dim(); ++j)
      if (Q_(i, j) != 0.0 && in_block(mask, i) != in_block(mask, j))
        throw InvalidArgument("QuadraticCost: cost couples the block with other coordinates");

  const Index k = static_cast<Index>(block.size());
  MatrixXd Q(k, k);
  VectorXd c(k);
  for (Index a = 0; a < k; ++a) {
    c(a) = c_(block[static_cast<size_t>(a)]);
    for (Index b = 0; b < k; ++b) Q(a, b) = Q_(block[static_cast<size_t>(a)], block[static_cast<size_t>(b)]);
  }
  // Offsets are not attributable to a block.
  return {std::move(Q), std::move(c), 0.0};
}

// ---------------------------------------------------------------- PolyhedralSet

PolyhedralSet::PolyhedralSet(MatrixXd A, VectorXd b, VectorXd lower, VectorXd upper)
    : A_(std::move(A)), b_(std::move(b)), lower_(std::move(lower)), upper_(std::move(upper))
{
  if (lower_.size() != upper_.size()) throw InvalidDimension("PolyhedralSet: lower/upper size mismatch");
  if (A_.rows() != b_.size()) throw InvalidDimension("PolyhedralSet: rows(A) != len(b)");
  if (A_.rows() > 0 && A_.cols() != lower_.size()) throw InvalidDimension("PolyhedralSet: cols(A) != dim");
  if (A_.rows() == 0) A_.resize(0, lower_.size());
  for (Index i = 0; i < lower_.size(); ++i) {
    if (std::isnan(lower_(i)) || std::isnan(upper_(i))) throw InvalidArgument("PolyhedralSet: NaN bound");
    if (lower_(i) > upper_(i)) throw InvalidArgument("PolyhedralSet: lower > upper");
  }
}

PolyhedralSet PolyhedralSet::whole_space(Index n)
{
  return {MatrixXd(0, n), VectorXd(0), VectorXd::Constant(n, -kInf), VectorXd::Constant(n, kInf)};
}

PolyhedralSet PolyhedralSet::box(VectorXd lower, VectorXd upper)
{
  const Index n = lower.size();
  return {MatrixXd(0, n), VectorXd(0), std::move(lower), std::move(upper)};
}

PolyhedralSet PolyhedralSet::halfspaces(MatrixXd A, VectorXd b)
{
  const Index n = A.cols();
  return {std::move(A), std::move(b), VectorXd::Constant(n, -kInf), VectorXd::Constant(n, kInf)};
}

PolyhedralSet PolyhedralSet::nonnegative_orthant(Index n)
{
  return box(VectorXd::Zero(n), VectorXd::Constant(n, kInf));
}

Index PolyhedralSet::row_count() const
{
  Index count = A_.rows();
  for (Index i = 0; i < dim(); ++i) {
    if (std::isfinite(upper_(i))) ++count;
    if (std::isfinite(lower_(i))) ++count;
  }
  return count;
}

PolyhedralSet::Rows PolyhedralSet::rows() const
{
  const Index n = dim();
  Rows r{MatrixXd::Zero(row_count(), n), VectorXd::Zero(row_count())};
  Index k = A_.rows();
  if (k > 0) {
    r.G.topRows(k) = A_;
    r.h.head(k) = b_;
  }
  for (Index i = 0; i < n; ++i)
    if (std::isfinite(upper_(i))) {
      r.G(k, i) = 1.0;
      r.h(k++) = upper_(i);
    }
  for (Index i = 0; i < n; ++i)
    if (std::isfinite(lower_(i))) {
      r.G(k, i) = -1.0;
      r.h(k++) = -lower_(i);
    }
  return r;
}

VectorXd PolyhedralSet::constraint_values(const VectorXd & x) const
{
  require_dim(x, dim(), "PolyhedralSet::constraint_values");
  const Rows r = rows();
  return r.G * x - r.h;
}

double PolyhedralSet::max_violation(const VectorXd & x) const
{
  const VectorXd g = constraint_values(x);
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

bool PolyhedralSet::contains(const VectorXd & x, double tol) const
{
  require_dim(x, dim(), "PolyhedralSet::contains");
  if (A_.rows() > 0 && ((A_ * x - b_).array() > tol).any()) return false;
  return ((x - lower_).array() >= -tol).all() && ((upper_ - x).array() >= -tol).all();
}

PolyhedralSet PolyhedralSet::intersect(const PolyhedralSet & other) const
{
  if (other.dim() != dim()) throw InvalidDimension("PolyhedralSet::intersect: dimension mismatch");
  MatrixXd A(A_.rows() + other.A_.rows(), dim());
  A << A_, other.A_;
  VectorXd b(b_.size() + other.b_.size());
  b << b_, other.b_;
  VectorXd lo = lower_.cwiseMax(other.lower_);
  VectorXd hi = upper_.cwiseMin(other.upper_);
  // Disjoint boxes are an empty set, expressed as a contradictory row pair so
  // the set stays constructible and the QP reports infeasibility.
  for (Index i = 0; i < dim(); ++i)
    if (lo(i) > hi(i)) {
      const Index r = A.rows();
      A.conservativeResize(r + 2, Eigen::NoChange);
      b.conservativeResize(r + 2);
      A.row(r).setZero();
      A.row(r + 1).setZero();
      A(r, i) = 1.0;
      A(r + 1, i) = -1.0;
      b(r) = hi(i);
      b(r + 1) = -lo(i);
      lo(i) = -kInf;
      hi(i) = kInf;
    }
  return {std::move(A), std::move(b), std::move(lo), std::move(hi)};
}

PolyhedralSet PolyhedralSet::restrict_to(const IndexBlock & block) const
{
  const auto mask = block_mask(block, dim());
  const Index k = static_cast<Index>(block.size());
  std::vector<Index> kept_rows;
  for (Index r = 0; r < A_.rows(); ++r) {
    bool inside = false, outside = false;
    for (Index i = 0; i < dim(); ++i) {
      if (A_(r, i) == 0.0) continue;
      (in_block(mask, i) ? inside : outside) = true;
    }
    if (inside && outside) throw InvalidArgument("PolyhedralSet: constraint row couples the block with other coordinates");
    if (inside) kept_rows.push_back(r);
  }
  MatrixXd A(static_cast<Index>(kept_rows.size()), k);
  VectorXd b(static_cast<Index>(kept_rows.size()));
  for (size_t r = 0; r < kept_rows.size(); ++r) {
    b(static_cast<Index>(r)) = b_(kept_rows[r]);
    for (Index a = 0; a < k; ++a) A(static_cast<Index>(r), a) = A_(kept_rows[r], block[static_cast<size_t>(a)]);
  }
  VectorXd lo(k), hi(k);
  for (Index a = 0; a < k; ++a) {
    lo(a) = lower_(block[static_cast<size_t>(a)]);
    hi(a) = upper_(block[static_cast<size_t>(a)]);
  }
  return {std::move(A), std::move(b), std::move(lo), std::move(hi)};
}

std::vector<Index> PolyhedralSet::restricted_row_indices(const IndexBlock & block) const
{
  const auto mask = block_mask(block, dim());
  std::vector<Index> map;
  for (Index r = 0; r < A_.rows(); ++r) {
    bool inside = false, outside = false;
    for (Index i = 0; i < dim(); ++i) {
      if (A_(r, i) == 0.0) continue;
      (in_block(mask, i) ? inside : outside) = true;
    }
    if (inside && outside) throw InvalidArgument("PolyhedralSet: constraint row couples the block with other coordinates");
    if (inside) map.push_back(r);
  }
  // Canonical index of the bound row of coordinate i within its bound group.
  std::vector<Index> upper_pos(static_cast<size_t>(dim()), -1), lower_pos(static_cast<size_t>(dim()), -1);
  Index k = A_.rows();
  for (Index i = 0; i < dim(); ++i)
    if (std::isfinite(upper_(i))) upper_pos[size_t(i)] = k++;
  for (Index i = 0; i < dim(); ++i)
    if (std::isfinite(lower_(i))) lower_pos[size_t(i)] = k++;
  for (Index i : block)
    if (upper_pos[size_t(i)] >= 0) map.push_back(upper_pos[size_t(i)]);
  for (Index i : block)
    if (lower_pos[size_t(i)] >= 0) map.push_back(lower_pos[size_t(i)]);
  return map;
}

// ---------------------------------------------------------------- plants

VectorXd Plant::evaluate(const VectorXd & u) const
{
  require_dim(u, input_dim(), "Plant::evaluate");
  VectorXd y = do_evaluate(u);
  require_dim(y, output_dim(), "Plant::evaluate output");
  return y;
}

MatrixXd Plant::jacobian(const VectorXd & u) const
{
  require_dim(u, input_dim(), "Plant::jacobian");
  MatrixXd J = do_jacobian(u);
  if (J.rows() != output_dim() || J.cols() != input_dim())
    throw InvalidDimension("Plant::jacobian: implementation returned wrong shape");
  return J;
}

LinearPlant::LinearPlant(MatrixXd H, VectorXd offset) : H_(std::move(H)), offset_(std::move(offset))
{
  if (offset_.size() != H_.rows()) throw InvalidDimension("LinearPlant: len(offset) != rows(H)");
}

FunctionPlant::FunctionPlant(Index input_dim, Index output_dim, EvalFn eval, JacFn jac)
    : m_(input_dim), p_(output_dim), eval_(std::move(eval)), jac_(std::move(jac))
{
  if (!eval_ || !jac_) throw InvalidArgument("FunctionPlant: both callables are required");
}

// ---------------------------------------------------------------- linearization

VectorXd AffineMap::apply(const VectorXd & u) const
{
  require_dim(u, anchor.size(), "AffineMap::apply");
  return base + J * (u - anchor);
}

AffineMap linearize(const Plant & plant, const VectorXd & u_k, const VectorXd & y_k)
{
  require_dim(u_k, plant.input_dim(), "linearize: u_k");
  require_dim(y_k, plant.output_dim(), "linearize: y_k");
  return {y_k, u_k, plant.jacobian(u_k)};
}

PolyhedralSet linearized_output_set(const AffineMap & map, const PolyhedralSet & output_set)
{
  if (output_set.dim() != map.base.size()) throw InvalidDimension("linearized_output_set: output set dimension");
  // G (y_k + J (u - u_k)) <= h   <=>   (G J) u <= h - G (y_k - J u_k)
  const PolyhedralSet::Rows r = output_set.rows();
  MatrixXd A = r.G * map.J;
  VectorXd b = r.h - r.G * (map.base - map.J * map.anchor);
  return PolyhedralSet::halfspaces(std::move(A), std::move(b));
}

// ---------------------------------------------------------------- ProblemSpec

namespace {

void check_partition(std::vector<IndexBlock> & blocks, Index n, const char * what)
{
  if (blocks.empty()) {
    blocks.push_back(full_block(n));
    return;
  }
  std::vector<int> count(static_cast<size_t>(n), 0);
  for (const auto & block : blocks)
    for (Index i : block) {
      if (i < 0 || i >= n) throw InvalidArgument(std::string(what) + ": block index out of range");
      ++count[static_cast<size_t>(i)];
    }
  for (int c : count)
    if (c != 1) throw InvalidArgument(std::string(what) + ": blocks must partition the coordinates disjointly");
}

}  // namespace

void ProblemSpec::validate()
{
  if (input_cost.dim() != input_dim) throw InvalidDimension("ProblemSpec: input cost dimension");
  if (output_cost.dim() != output_dim) throw InvalidDimension("ProblemSpec: output cost dimension");
  if (input_set.dim() != input_dim) throw InvalidDimension("ProblemSpec: input set dimension");
  if (output_set.dim() != output_dim) throw InvalidDimension("ProblemSpec: output set dimension");
  check_partition(input_blocks, input_dim, "input blocks");
  check_partition(output_blocks, output_dim, "output blocks");
}

// ---------------------------------------------------------------- measurement

MeasurementNoise::MeasurementNoise(double sigma, std::uint64_t seed, std::vector<Index> noisy_outputs)
    : sigma_(sigma), seed_(seed), noisy_outputs_(std::move(noisy_outputs)), rng_(seed)
{
  if (!(sigma_ >= 0.0)) throw InvalidArgument("MeasurementNoise: sigma must be >= 0");
}

VectorXd MeasurementNoise::corrupt(const VectorXd & y_true)
{
  VectorXd y = y_true;
  if (!active()) return y;
  if (noisy_outputs_.empty()) {
    for (Index i = 0; i < y.size(); ++i) y(i) += sigma_ * normal_(rng_);
  } else {
    for (Index i : noisy_outputs_) {
      if (i < 0 || i >= y.size()) throw InvalidDimension("MeasurementNoise: noisy output index out of range");
      y(i) += sigma_ * normal_(rng_);
    }
  }
  return y;
}

Measurement measure(const Plant & plant, const VectorXd & u, MeasurementNoise & noise)
{
  Measurement m;
  m.y_true = plant.evaluate(u);
  m.y = noise.corrupt(m.y_true);
  return m;
}

}  // namespace ofo
