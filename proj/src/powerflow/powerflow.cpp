#include "ofo/powerflow.hpp"

#include "ofo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <queue>
#include <sstream>

namespace ofo {

namespace {

using cd = std::complex<double>;
using VectorXcd = Eigen::VectorXcd;

VectorXcd bus_voltages(const GridState & s)
{
  const Index B = s.v.size();
  VectorXcd V(B + 1);
  V(0) = cd(1.0, 0.0);
  for (Index i = 0; i < B; ++i) V(i + 1) = std::polar(s.v(i), s.theta(i));
  return V;
}

/// Complex power injected at every bus, slack included.
VectorXcd bus_power(const GridNetwork & net, const GridState & s)
{
  const VectorXcd V = bus_voltages(s);
  const VectorXcd I = net.admittance() * V;
  return V.cwiseProduct(I.conjugate());
}

void check_state(const GridNetwork & net, const GridState & s)
{
  const Index B = net.pq_count();
  if (s.v.size() != B || s.theta.size() != B)
    throw InvalidDimension("grid state has " + std::to_string(s.v.size()) + " buses, network has " +
                           std::to_string(B));
}

void check_injection(const GridNetwork & net, const InjectionVector & inj)
{
  const Index B = net.pq_count();
  if (inj.P.size() != B || inj.Q.size() != B)
    throw InvalidDimension("injection has " + std::to_string(inj.P.size()) + " buses, network has " +
                           std::to_string(B));
}

std::string trim_comment(const std::string & line)
{
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

}  // namespace

GridNetwork::GridNetwork(std::vector<Bus> buses, std::vector<Line> lines, double base_mva)
    : buses_(std::move(buses)), lines_(std::move(lines)), base_mva_(base_mva)
{
  if (!(base_mva_ > 0.0) || !std::isfinite(base_mva_)) throw InvalidArgument("base_mva must be positive");
  if (buses_.size() < 2) throw InvalidArgument("network needs a slack bus and at least one PQ bus");
  std::sort(buses_.begin(), buses_.end(), [](const Bus & a, const Bus & b) { return a.id < b.id; });
  const Index n = static_cast<Index>(buses_.size());
  for (Index i = 0; i < n; ++i) {
    const Bus & bus = buses_[size_t(i)];
    if (bus.id != i) throw InvalidArgument("bus ids must be 0.." + std::to_string(n - 1) + " without gaps");
    if ((bus.type == BusType::Slack) != (i == 0)) throw InvalidArgument("bus 0 must be the unique slack bus");
    if (!std::isfinite(bus.p_load) || !std::isfinite(bus.q_load))
      throw InvalidArgument("bus " + std::to_string(i) + " has a non-finite load");
  }

  Ybus_ = MatrixXcd::Zero(n, n);
  std::vector<std::vector<Index>> adjacency(static_cast<size_t>(n));
  for (const Line & l : lines_) {
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n || l.from == l.to)
      throw InvalidArgument("line " + std::to_string(l.from) + "-" + std::to_string(l.to) + " has invalid ends");
    const cd z(l.r, l.x);
    if (std::abs(z) == 0.0 || !std::isfinite(std::abs(z)) || !std::isfinite(l.shunt_b))
      throw InvalidArgument("line " + std::to_string(l.from) + "-" + std::to_string(l.to) +
                            " needs a finite nonzero impedance");
    const cd y = 1.0 / z;
    const cd half_shunt(0.0, 0.5 * l.shunt_b);
    Ybus_(l.from, l.from) += y + half_shunt;
    Ybus_(l.to, l.to) += y + half_shunt;
    Ybus_(l.from, l.to) -= y;
    Ybus_(l.to, l.from) -= y;
    adjacency[size_t(l.from)].push_back(l.to);
    adjacency[size_t(l.to)].push_back(l.from);
  }

  std::vector<bool> seen(static_cast<size_t>(n), false);
  std::queue<Index> frontier;
  frontier.push(0);
  seen[0] = true;
  Index reached = 1;
  while (!frontier.empty()) {
    const Index i = frontier.front();
    frontier.pop();
    for (Index j : adjacency[size_t(i)])
      if (!seen[size_t(j)]) {
        seen[size_t(j)] = true;
        ++reached;
        frontier.push(j);
      }
  }
  if (reached != n) throw InvalidArgument("network is not connected");
}

GridNetwork GridNetwork::parse(std::istream & in)
{
  std::vector<Bus> buses;
  std::vector<Line> lines;
  double base = 1.0;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::istringstream fields(trim_comment(raw));
    std::string keyword;
    if (!(fields >> keyword)) continue;
    auto fail = [&](const std::string & what) {
      throw InvalidArgument("network line " + std::to_string(lineno) + ": " + what);
    };
    if (keyword == "base_mva") {
      if (!(fields >> base)) fail("expected 'base_mva <value>'");
    } else if (keyword == "bus") {
      Bus b;
      std::string type;
      if (!(fields >> b.id >> type >> b.p_load >> b.q_load)) fail("expected 'bus <id> <slack|pq> <p_load> <q_load>'");
      if (type == "slack")
        b.type = BusType::Slack;
      else if (type == "pq")
        b.type = BusType::PQ;
      else
        fail("unknown bus type '" + type + "'");
      buses.push_back(b);
    } else if (keyword == "line") {
      Line l;
      if (!(fields >> l.from >> l.to >> l.r >> l.x)) fail("expected 'line <from> <to> <r> <x> [shunt_b]'");
      if (!(fields >> l.shunt_b)) l.shunt_b = 0.0;
      lines.push_back(l);
    } else {
      fail("unknown record '" + keyword + "'");
    }
    std::string extra;
    if (fields.clear(), fields >> extra) fail("unexpected trailing field '" + extra + "'");
  }
  return GridNetwork(std::move(buses), std::move(lines), base);
}

GridNetwork GridNetwork::load(const std::string & path)
{
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open network file '" + path + "'");
  return parse(in);
}

void GridNetwork::write(std::ostream & out) const
{
  std::ostringstream s;
  s << std::setprecision(17);
  s << "base_mva " << base_mva_ << "\n";
  for (const Bus & b : buses_)
    s << "bus " << b.id << ' ' << (b.type == BusType::Slack ? "slack" : "pq") << ' ' << b.p_load << ' '
      << b.q_load << "\n";
  for (const Line & l : lines_) s << "line " << l.from << ' ' << l.to << ' ' << l.r << ' ' << l.x << ' ' << l.shunt_b << "\n";
  out << s.str();
}

GridNetwork radial_feeder(const FeederOptions & o)
{
  if (o.pq_buses < 1) throw InvalidArgument("feeder needs at least one PQ bus");
  if (o.lateral_start != 0 && (o.lateral_start < 2 || o.lateral_start > o.pq_buses || o.lateral_root < 1 ||
                               o.lateral_root >= o.lateral_start - 1))
    throw InvalidArgument("lateral must start after the main line and branch off an interior main-line bus");
  std::vector<Bus> buses;
  buses.push_back(Bus{0, BusType::Slack, 0.0, 0.0});
  std::vector<Line> lines;
  for (Index i = 1; i <= o.pq_buses; ++i) {
    buses.push_back(Bus{i, BusType::PQ, o.p_load, o.q_load});
    const Index parent = (i == o.lateral_start) ? o.lateral_root : i - 1;
    lines.push_back(Line{parent, i, o.r, o.x, 0.0});
  }
  return GridNetwork(std::move(buses), std::move(lines), o.base_mva);
}

VectorXd GridState::packed() const
{
  VectorXd y(v.size() + theta.size());
  y << v, theta;
  return y;
}

GridState GridState::unpack(const VectorXd & y)
{
  if (y.size() % 2 != 0) throw InvalidDimension("packed grid output must have even length");
  const Index B = y.size() / 2;
  return GridState{y.head(B), y.tail(B)};
}

GridState GridState::flat(Index buses) { return GridState{VectorXd::Ones(buses), VectorXd::Zero(buses)}; }

VectorXd InjectionVector::packed() const
{
  VectorXd u(2 * P.size());
  for (Index b = 0; b < P.size(); ++b) {
    u(2 * b) = P(b);
    u(2 * b + 1) = Q(b);
  }
  return u;
}

InjectionVector InjectionVector::unpack(const VectorXd & u)
{
  if (u.size() % 2 != 0) throw InvalidDimension("packed injection must have even length");
  const Index B = u.size() / 2;
  InjectionVector inj{VectorXd(B), VectorXd(B)};
  for (Index b = 0; b < B; ++b) {
    inj.P(b) = u(2 * b);
    inj.Q(b) = u(2 * b + 1);
  }
  return inj;
}

InjectionVector InjectionVector::from_loads(const GridNetwork & net)
{
  const Index B = net.pq_count();
  InjectionVector inj{VectorXd(B), VectorXd(B)};
  for (Index b = 0; b < B; ++b) {
    inj.P(b) = -net.buses()[size_t(b + 1)].p_load;
    inj.Q(b) = -net.buses()[size_t(b + 1)].q_load;
  }
  return inj;
}

VectorXd power_mismatch(const GridNetwork & net, const GridState & state, const InjectionVector & inj)
{
  check_state(net, state);
  check_injection(net, inj);
  const Index B = net.pq_count();
  const VectorXcd S = bus_power(net, state);
  VectorXd F(2 * B);
  for (Index i = 0; i < B; ++i) {
    F(i) = S(i + 1).real() - inj.P(i);
    F(B + i) = S(i + 1).imag() - inj.Q(i);
  }
  return F;
}

MatrixXd power_flow_jacobian(const GridNetwork & net, const GridState & state)
{
  check_state(net, state);
  const Index B = net.pq_count();
  const MatrixXcd & Y = net.admittance();
  const VectorXcd V = bus_voltages(state);
  const VectorXcd I = Y * V;
  const VectorXcd Vnorm = V.cwiseQuotient(V.cwiseAbs().cast<cd>());

  // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V)),
  // dS/dv = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|).
  MatrixXd J(2 * B, 2 * B);
  for (Index i = 0; i < B; ++i) {
    const Index a = i + 1;
    for (Index k = 0; k < B; ++k) {
      const Index c = k + 1;
      const cd diag_I = (a == c) ? I(a) : cd(0.0);
      const cd dth = cd(0.0, 1.0) * V(a) * std::conj(diag_I - Y(a, c) * V(c));
      cd dv = V(a) * std::conj(Y(a, c) * Vnorm(c));
      if (a == c) dv += std::conj(I(a)) * Vnorm(a);
      J(i, k) = dth.real();
      J(i, B + k) = dv.real();
      J(B + i, k) = dth.imag();
      J(B + i, B + k) = dv.imag();
    }
  }
  return J;
}

GridState solve_power_flow(const GridNetwork & net, const InjectionVector & inj, const std::optional<GridState> & init,
                           const PowerFlowOptions & options)
{
  check_injection(net, inj);
  const Index B = net.pq_count();
  GridState s = init ? *init : GridState::flat(B);
  check_state(net, s);
  if ((s.v.array() <= 0.0).any()) throw InvalidArgument("initial voltage magnitudes must be positive");

  VectorXd F = power_mismatch(net, s, inj);
  double norm = F.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < options.max_iterations; ++it) {
    if (norm <= options.tolerance) return s;
    const Eigen::PartialPivLU<MatrixXd> lu(power_flow_jacobian(net, s));
    if (!(lu.rcond() > 1e-14)) throw PowerFlowDiverged("power-flow Jacobian became singular");
    const VectorXd dx = lu.solve(-F);

    double t = 1.0;
    for (int halving = 0;; ++halving) {
      GridState trial{s.v + t * dx.tail(B), s.theta + t * dx.head(B)};
      if ((trial.v.array() > 0.0).all()) {
        const VectorXd Ft = power_mismatch(net, trial, inj);
        const double nt = Ft.lpNorm<Eigen::Infinity>();
        if (std::isfinite(nt) && (nt < norm || halving >= 30)) {
          s = std::move(trial);
          F = Ft;
          norm = nt;
          break;
        }
      }
      if (halving >= 30) throw PowerFlowDiverged("power flow: no admissible damped step");
      t *= 0.5;
    }
  }
  if (norm <= options.tolerance) return s;
  std::ostringstream msg;
  msg << "power flow did not converge in " << options.max_iterations << " iterations (mismatch " << norm << ")";
  throw PowerFlowDiverged(msg.str());
}

MatrixXd sensitivity(const GridNetwork & net, const GridState & state)
{
  const Index B = net.pq_count();
  const Eigen::PartialPivLU<MatrixXd> lu(power_flow_jacobian(net, state));
  if (!(lu.rcond() > 1e-14)) throw SensitivitySingular("power-flow Jacobian is singular at this state");
  const MatrixXd Jinv = lu.inverse();  // rows (theta; v), cols (P; Q)

  MatrixXd S(2 * B, 2 * B);
  for (Index r = 0; r < 2 * B; ++r) {
    const Index std_row = r < B ? B + r : r - B;
    for (Index b = 0; b < B; ++b) {
      S(r, 2 * b) = Jinv(std_row, b);
      S(r, 2 * b + 1) = Jinv(std_row, B + b);
    }
  }
  return S;
}

GridPlant::GridPlant(GridNetwork net, SensitivityMode mode, const VectorXd & nominal_u)
    : net_(std::move(net)), mode_(mode)
{
  require_dim(nominal_u, input_dim(), "nominal injection");
  last_u_ = nominal_u;
  last_state_ = solve_power_flow(net_, InjectionVector::unpack(nominal_u));
  if (mode_ == SensitivityMode::FrozenAtNominal) frozen_ = sensitivity(net_, last_state_);
}

GridState GridPlant::state_at(const VectorXd & u) const
{
  require_dim(u, input_dim(), "grid injection");
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (u == last_u_) return last_state_;
  const InjectionVector inj = InjectionVector::unpack(u);
  GridState s;
  try {
    s = solve_power_flow(net_, inj, last_state_);
  } catch (const PowerFlowDiverged &) {
    s = solve_power_flow(net_, inj);
  }
  last_u_ = u;
  last_state_ = s;
  return s;
}

VectorXd GridPlant::do_evaluate(const VectorXd & u) const { return state_at(u).packed(); }

MatrixXd GridPlant::do_jacobian(const VectorXd & u) const
{
  if (mode_ == SensitivityMode::FrozenAtNominal) return frozen_;
  return sensitivity(net_, state_at(u));
}

std::shared_ptr<GridPlant> grid_plant(const GridNetwork & net, const std::vector<IndexBlock> & input_blocks,
                                      SensitivityMode mode, const VectorXd & nominal_u)
{
  const Index m = 2 * net.pq_count();
  for (size_t j = 0; j < input_blocks.size(); ++j) {
    const IndexBlock & block = input_blocks[j];
    for (Index i : block) {
      if (i < 0 || i >= m) throw InvalidArgument("actor " + std::to_string(j) + " owns input " + std::to_string(i) +
                                                 " outside the " + std::to_string(m) + " grid inputs");
      const Index partner = (i % 2 == 0) ? i + 1 : i - 1;
      if (std::find(block.begin(), block.end(), partner) == block.end())
        throw InvalidArgument("actor " + std::to_string(j) + " owns only one of (P, Q) at bus " +
                              std::to_string(i / 2 + 1));
    }
  }
  return std::make_shared<GridPlant>(net, mode, nominal_u);
}

void write_bus_states_csv(std::ostream & out, const GridNetwork & net, const GridState & state,
                          const InjectionVector & inj)
{
  check_state(net, state);
  check_injection(net, inj);
  const VectorXcd S = bus_power(net, state);
  std::ostringstream s;
  s << std::setprecision(12);
  s << "bus,v_pu,theta_deg,p_inj_pu,q_inj_pu\n";
  s << "0,1,0," << S(0).real() << ',' << S(0).imag() << "\n";
  for (Index b = 0; b < net.pq_count(); ++b)
    s << b + 1 << ',' << state.v(b) << ',' << state.theta(b) * 180.0 / std::numbers::pi << ',' << inj.P(b) << ','
      << inj.Q(b) << "\n";
  out << s.str();
}

}  // namespace ofo
