#include "ofo/market.hpp"

#include "ofo/detail/closed_loop.hpp"
#include "ofo/errors.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

namespace ofo {

namespace {

VectorXd gather(const VectorXd & x, const IndexBlock & block)
{
  VectorXd out(static_cast<Index>(block.size()));
  for (size_t a = 0; a < block.size(); ++a) out(Index(a)) = x(block[a]);
  return out;
}

void scatter(VectorXd & x, const IndexBlock & block, const VectorXd & part)
{
  for (size_t a = 0; a < block.size(); ++a) x(block[a]) = part(Index(a));
}

VectorXd checked(const QpSolution & sol, const char * who)
{
  if (!sol.optimal()) throw Error(std::string(who) + ": best response " + to_string(sol.status));
  return sol.x;
}

void check_incentive(const Incentive & p, Index n)
{
  if (!(p.gamma >= 0.0)) throw InvalidArgument("Incentive: gamma must be >= 0");
  require_dim(p.anchor, n, "Incentive anchor");
  require_dim(p.linear, n, "Incentive linear term");
}

void check_partition(const std::vector<IndexBlock> & blocks, Index n, const char * what)
{
  std::vector<int> owners(static_cast<size_t>(n), 0);
  for (const auto & block : blocks)
    for (Index i : block) {
      if (i < 0 || i >= n) throw InvalidArgument(std::string(what) + ": coordinate out of range");
      ++owners[size_t(i)];
    }
  for (int c : owners)
    if (c != 1) throw InvalidArgument(std::string(what) + ": actor blocks must partition the coordinates");
}

template <class Ptr>
std::vector<IndexBlock> blocks_of(const std::vector<Ptr> & actors)
{
  std::vector<IndexBlock> out;
  for (const auto & a : actors) {
    if (!a) throw InvalidArgument("Market: null actor");
    out.push_back(a->block());
  }
  return out;
}

}  // namespace

double Incentive::damping(const VectorXd & x) const { return 0.5 * gamma * (x - anchor).squaredNorm(); }

double Incentive::evaluate(const VectorXd & x) const
{
  check_incentive(*this, x.size());
  return damping(x) + linear.dot(x) + offset;
}

Actor::Actor(IndexBlock block) : block_(std::move(block))
{
  if (block_.empty()) throw InvalidArgument("Actor: empty block");
}

InputActor::InputActor(IndexBlock block, QuadraticCost cost, PolyhedralSet set)
    : Actor(std::move(block)), cost_(std::move(cost)), set_(std::move(set))
{
  if (cost_.dim() != dim() || set_.dim() != dim()) throw InvalidDimension("InputActor: cost/set do not match block");
}

VectorXd InputActor::best_response(const Incentive & p)
{
  check_incentive(p, dim());
  return checked(prox(cost_, set_, p.gamma, p.anchor, p.linear, p.anchor), "input actor");
}

OutputActor::OutputActor(IndexBlock block, QuadraticCost cost, PolyhedralSet set)
    : OutputParticipant(std::move(block)), cost_(std::move(cost)), set_(std::move(set))
{
  if (cost_.dim() != dim() || set_.dim() != dim()) throw InvalidDimension("OutputActor: cost/set do not match block");
}

VectorXd OutputActor::best_response(const Incentive & p)
{
  check_incentive(p, dim());
  const QpSolution sol = prox(cost_, set_, p.gamma, p.anchor, p.linear, p.anchor);
  VectorXd z = checked(sol, "output actor");
  shadow_prices_ = sol.dual;
  return z;
}

VectorXd OutputActor::initial_target(const VectorXd & y_block)
{
  require_dim(y_block, dim(), "OutputActor::initial_target");
  return checked(project(y_block, set_), "output actor initial target");
}

VectorXd best_response(Actor & actor, const Incentive & incentive) { return actor.best_response(incentive); }

const char * to_string(MarketVariant variant)
{
  return variant == MarketVariant::PrimeY ? "prime_y" : "prime_h";
}

ControllerKind controller_kind(MarketVariant variant)
{
  return variant == MarketVariant::PrimeY ? ControllerKind::PrimeY : ControllerKind::PrimeH;
}

const char * to_string(ActorRole role) { return role == ActorRole::Input ? "input" : "output"; }

Incentive incentive_prime_y(const IndexBlock & block, const OperatorState & state, const PublicOutputModel & model,
                            const HyperParams & hp)
{
  if (!model.output_cost.is_linear())
    throw UnsupportedMarketMode("PRIME-Y market needs a linear output cost; use PRIME-H with output actors");
  const auto rows = model.output_set.rows();
  require_dim(state.lambda_y, rows.G.rows(), "incentive_prime_y: lambda_y");
  const VectorXd price = state.J.transpose() * (rows.G.transpose() * state.lambda_y + model.output_cost.c());
  return Incentive{hp.gamma_u, gather(state.u, block), gather(price, block), 0.0};
}

Incentive incentive_prime_h_input(const IndexBlock & block, const OperatorState & state, const HyperParams & hp)
{
  const VectorXd price = state.J.transpose() * state.nu_h;
  return Incentive{hp.gamma_u, gather(state.u, block), gather(price, block), 0.0};
}

Incentive incentive_prime_h_output(const IndexBlock & block, const OperatorState & state, const HyperParams & hp)
{
  const VectorXd price = -(state.nu_h + hp.rho * (state.y - state.z));
  return Incentive{hp.rho + hp.gamma_z, gather(state.z, block), gather(price, block), 0.0};
}

void Market::validate() const
{
  check_partition(blocks_of(inputs), input_dim, "Market inputs");
  if (variant == MarketVariant::PrimeY) {
    if (!outputs.empty()) throw UnsupportedMarketMode("PRIME-Y does not allow output actors");
    if (!public_outputs) throw InvalidArgument("PRIME-Y market needs the public output model");
    if (!public_outputs->output_cost.is_linear())
      throw UnsupportedMarketMode("PRIME-Y market needs a linear output cost");
    if (public_outputs->output_cost.dim() != output_dim || public_outputs->output_set.dim() != output_dim)
      throw InvalidDimension("PRIME-Y market: public output model dimension");
  } else {
    check_partition(blocks_of(outputs), output_dim, "Market outputs");
  }
}

Market make_market(const ProblemSpec & spec_in, MarketVariant variant)
{
  ProblemSpec spec = spec_in;
  spec.validate();
  Market market;
  market.variant = variant;
  market.input_dim = spec.input_dim;
  market.output_dim = spec.output_dim;
  for (const auto & block : spec.input_blocks)
    market.inputs.push_back(
        std::make_shared<InputActor>(block, spec.input_cost.restrict_to(block), spec.input_set.restrict_to(block)));
  if (variant == MarketVariant::PrimeY) {
    if (!spec.output_cost.is_linear())
      throw UnsupportedMarketMode("PRIME-Y market needs a linear output cost; use PRIME-H with output actors");
    market.public_outputs = PublicOutputModel{spec.output_cost, spec.output_set};
  } else {
    for (const auto & block : spec.output_blocks)
      market.outputs.push_back(std::make_shared<OutputActor>(block, spec.output_cost.restrict_to(block),
                                                             spec.output_set.restrict_to(block)));
  }
  market.validate();
  return market;
}

double RoundOutcome::total_payment() const
{
  double total = 0.0;
  for (double p : input_payments) total += p;
  for (double p : output_payments) total += p;
  return total;
}

OperatorState init_operator(Market & market, const VectorXd & u0, const VectorXd & y0)
{
  market.validate();
  require_dim(u0, market.input_dim, "init_operator: u0");
  require_dim(y0, market.output_dim, "init_operator: y0");
  OperatorState s;
  s.u = u0;
  s.y = y0;
  if (market.variant == MarketVariant::PrimeY) {
    s.lambda_y = VectorXd::Zero(market.public_outputs->output_set.row_count());
  } else {
    s.nu_h = VectorXd::Zero(market.output_dim);
    s.z = VectorXd(market.output_dim);
    for (const auto & actor : market.outputs) {
      const VectorXd z0 = actor->initial_target(gather(y0, actor->block()));
      require_dim(z0, actor->dim(), "output actor initial target");
      scatter(s.z, actor->block(), z0);
    }
  }
  return s;
}

RoundOutcome market_round(Market & market, const OperatorState & state, const VectorXd & y, const MatrixXd & J,
                          const HyperParams & hp)
{
  hp.validate();
  require_dim(state.u, market.input_dim, "market_round: u");
  require_dim(y, market.output_dim, "market_round: y");
  if (J.rows() != market.output_dim || J.cols() != market.input_dim)
    throw InvalidDimension("market_round: sensitivity has the wrong shape");

  RoundOutcome out;
  OperatorState & next = out.state;
  next = state;
  next.y = y;
  next.J = J;

  if (market.variant == MarketVariant::PrimeY) {
    if (!market.outputs.empty()) throw UnsupportedMarketMode("PRIME-Y does not allow output actors");
    if (!market.public_outputs) throw InvalidArgument("PRIME-Y market needs the public output model");
    next.lambda_y = dual_ascent(state.lambda_y, market.public_outputs->output_set, y, hp.rho);
    for (const auto & actor : market.inputs)
      out.input_incentives.push_back(incentive_prime_y(actor->block(), next, *market.public_outputs, hp));
  } else {
    require_dim(state.z, market.output_dim, "market_round: z");
    require_dim(state.nu_h, market.output_dim, "market_round: nu_h");
    next.nu_h = state.nu_h + hp.rho * (y - state.z);
    for (const auto & actor : market.outputs)
      out.output_incentives.push_back(incentive_prime_h_output(actor->block(), next, hp));
    for (const auto & actor : market.inputs)
      out.input_incentives.push_back(incentive_prime_h_input(actor->block(), next, hp));
  }

  // Incentives are fixed before any actor moves, so responses are independent.
  for (size_t l = 0; l < market.outputs.size(); ++l) {
    auto & actor = *market.outputs[l];
    const VectorXd z_l = best_response(actor, out.output_incentives[l]);
    require_dim(z_l, actor.dim(), "output actor decision");
    out.output_payments.push_back(out.output_incentives[l].evaluate(z_l));
    scatter(next.z, actor.block(), z_l);
  }
  for (size_t j = 0; j < market.inputs.size(); ++j) {
    auto & actor = *market.inputs[j];
    const VectorXd u_j = best_response(actor, out.input_incentives[j]);
    require_dim(u_j, actor.dim(), "input actor decision");
    out.input_payments.push_back(out.input_incentives[j].evaluate(u_j));
    scatter(next.u, actor.block(), u_j);
  }
  return out;
}

namespace {

struct LoopState
{
  VectorXd u;
  OperatorState op;
  double payment = 0.0;
  VectorXd kkt_duals;
};

}  // namespace

MarketRun run_market(MarketVariant variant, const ProblemSpec & spec, const Plant & plant, const HyperParams & hp,
                     MeasurementNoise & noise, const VectorXd & u0, const RunOptions & options)
{
  hp.validate();
  if (options.max_iters < 0) throw InvalidArgument("run_market: max_iters must be >= 0");
  Market market = make_market(spec, variant);
  Measurement m0 = measure(plant, u0, noise);
  if (options.initial_measurement) {
    require_dim(*options.initial_measurement, spec.output_dim, "run_market: initial measurement");
    m0.y = *options.initial_measurement;
  }

  LoopState s0;
  s0.u = u0;
  s0.op = init_operator(market, u0, m0.y);
  s0.kkt_duals = VectorXd::Zero(spec.output_set.row_count());
  if (variant == MarketVariant::PrimeY) s0.kkt_duals = s0.op.lambda_y;

  std::vector<std::vector<Index>> output_rows;
  for (const auto & actor : market.outputs) output_rows.push_back(spec.output_set.restricted_row_indices(actor->block()));

  MarketRun result;
  int round = 0;
  auto step = [&](const LoopState & s, const Measurement & m) {
    const RoundOutcome outcome = market_round(market, s.op, m.y, plant.jacobian(s.u), hp);
    ++round;
    LoopState next;
    next.op = outcome.state;
    next.u = next.op.u;
    next.payment = outcome.total_payment();
    if (variant == MarketVariant::PrimeY) {
      next.kkt_duals = next.op.lambda_y;
    } else {
      next.kkt_duals = VectorXd::Zero(spec.output_set.row_count());
      for (size_t l = 0; l < market.outputs.size(); ++l) {
        const VectorXd prices = market.outputs[l]->shadow_prices();
        if (prices.size() != static_cast<Index>(output_rows[l].size())) {
          next.kkt_duals.resize(0);
          break;
        }
        for (size_t r = 0; r < output_rows[l].size(); ++r) next.kkt_duals(output_rows[l][r]) = prices(Index(r));
      }
    }
    for (size_t l = 0; l < market.outputs.size(); ++l)
      result.ledger.push_back(LedgerEntry{round, ActorRole::Output, Index(l), outcome.output_payments[l],
                                          gather(next.op.z, market.outputs[l]->block())});
    for (size_t j = 0; j < market.inputs.size(); ++j)
      result.ledger.push_back(LedgerEntry{round, ActorRole::Input, Index(j), outcome.input_payments[j],
                                          gather(next.u, market.inputs[j]->block())});
    return next;
  };
  auto fill = [variant](TrajectoryRecord & r, const LoopState & s) {
    r.payments = s.payment;
    r.kkt_duals = s.kkt_duals;
    if (variant == MarketVariant::PrimeY) {
      r.duals = s.op.lambda_y;
    } else {
      r.duals = s.op.nu_h;
      r.z = s.op.z;
    }
  };
  auto change = [](const LoopState & a, const LoopState & b) {
    double c = detail::max_change(a.u, b.u);
    c = std::max(c, detail::max_change(a.op.lambda_y, b.op.lambda_y));
    c = std::max(c, detail::max_change(a.op.z, b.op.z));
    return std::max(c, detail::max_change(a.op.nu_h, b.op.nu_h));
  };
  result.trajectory = detail::closed_loop(controller_kind(variant), spec, plant, noise, std::move(s0), std::move(m0),
                                          options, step, fill, change);
  result.trajectory.market = true;
  return result;
}

void write_ledger_csv(std::ostream & out, const std::vector<LedgerEntry> & ledger)
{
  std::ostringstream s;
  s << std::setprecision(17);
  s << "round,role,actor_id,payment,decision\n";
  for (const auto & e : ledger) {
    s << e.round << ',' << to_string(e.role) << ',' << e.actor_id << ',' << e.payment << ',';
    for (Index i = 0; i < e.decision.size(); ++i) s << (i ? ";" : "") << e.decision(i);
    s << '\n';
  }
  out << s.str();
}

}  // namespace ofo
