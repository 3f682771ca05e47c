#pragma once

#include "ofo/controllers.hpp"
#include "ofo/subsolver.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace ofo {

/// Payment p(x) = (gamma/2) ||x - anchor||^2 + linear' x + offset.
/// Positive payments flow from the actor to the operator.
struct Incentive
{
  double gamma = 0.0;
  VectorXd anchor;
  VectorXd linear;
  double offset = 0.0;

  double evaluate(const VectorXd & x) const;
  /// The quadratic part alone, zero at the anchor.
  double damping(const VectorXd & x) const;
};

/// A market participant owning the coordinates `block`. What it optimizes is
/// its own business; the operator only sees decisions.
class Actor
{
public:
  virtual ~Actor() = default;

  const IndexBlock & block() const { return block_; }
  Index dim() const { return static_cast<Index>(block_.size()); }

  /// Decision minimizing the actor's private objective plus `incentive`.
  virtual VectorXd best_response(const Incentive & incentive) = 0;

protected:
  explicit Actor(IndexBlock block);

private:
  IndexBlock block_;
};

/// An actor that additionally picks its own initial output target.
class OutputParticipant : public Actor
{
public:
  /// z_l^0 given the measured outputs of its block.
  virtual VectorXd initial_target(const VectorXd & y_block) = 0;
  /// Multipliers of the actor's own constraints at its last response, in the
  /// canonical row order of its set; empty when not reported.
  virtual VectorXd shadow_prices() const { return {}; }

protected:
  using Actor::Actor;
};

/// Input actor j with private phi_u^j and C_u^j; u_j = argmin phi_u^j + p.
class InputActor final : public Actor
{
public:
  InputActor(IndexBlock block, QuadraticCost cost, PolyhedralSet set);
  VectorXd best_response(const Incentive & incentive) override;

private:
  QuadraticCost cost_;
  PolyhedralSet set_;
};

/// Output actor l with private phi_y^l and C_y^l; decides z_l in C_y^l.
class OutputActor final : public OutputParticipant
{
public:
  OutputActor(IndexBlock block, QuadraticCost cost, PolyhedralSet set);
  VectorXd best_response(const Incentive & incentive) override;
  VectorXd initial_target(const VectorXd & y_block) override;
  VectorXd shadow_prices() const override { return shadow_prices_; }

private:
  QuadraticCost cost_;
  PolyhedralSet set_;
  VectorXd shadow_prices_;
};

VectorXd best_response(Actor & actor, const Incentive & incentive);

enum class MarketVariant { PrimeY, PrimeH };

const char * to_string(MarketVariant variant);
ControllerKind controller_kind(MarketVariant variant);

/// Everything the operator holds: duals, public decisions, the last
/// measurement and the sensitivity at the last input. No actor data.
struct OperatorState
{
  VectorXd lambda_y;  ///< PRIME-Y, canonical output rows
  VectorXd nu_h;      ///< PRIME-H
  VectorXd u;
  VectorXd z;  ///< PRIME-H
  VectorXd y;
  MatrixXd J;
};

/// Public output-side model PRIME-Y prices with: linear cost c_y' y and C_y.
struct PublicOutputModel
{
  QuadraticCost output_cost;
  PolyhedralSet output_set;
};

/// gamma_u damping around u_j^k with price e_j' J' (G' lambda+ + c_y).
/// `state.lambda_y` must already hold lambda^{k+1}.
Incentive incentive_prime_y(const IndexBlock & block, const OperatorState & state, const PublicOutputModel & model,
                            const HyperParams & hp);

/// gamma_u damping around u_j^k with price e_j' J' nu+; `state.nu_h` holds nu^{k+1}.
Incentive incentive_prime_h_input(const IndexBlock & block, const OperatorState & state, const HyperParams & hp);

/// (rho + gamma_z) damping around z_l^k with price -g_l' (nu+ + rho (y^k - z^k)).
Incentive incentive_prime_h_output(const IndexBlock & block, const OperatorState & state, const HyperParams & hp);

/// Participants and public data of one market.
struct Market
{
  MarketVariant variant = MarketVariant::PrimeH;
  Index input_dim = 0;
  Index output_dim = 0;
  std::vector<std::shared_ptr<Actor>> inputs;
  std::vector<std::shared_ptr<OutputParticipant>> outputs;
  /// Required for PRIME-Y only.
  std::optional<PublicOutputModel> public_outputs;

  /// Checks that actor blocks partition the coordinates and the variant's gating.
  void validate() const;
};

/// One actor per block of the problem, each holding its restricted cost and set.
/// PRIME-Y markets have no output actors and publish the linear output model.
Market make_market(const ProblemSpec & spec, MarketVariant variant);

enum class ActorRole { Input, Output };
const char * to_string(ActorRole role);

struct LedgerEntry
{
  int round = 0;  ///< round r produces u^r (and z^r)
  ActorRole role = ActorRole::Input;
  Index actor_id = 0;
  double payment = 0.0;
  VectorXd decision;
};

struct RoundOutcome
{
  OperatorState state;  ///< duals updated, u and z replaced by the assembled decisions
  std::vector<Incentive> input_incentives;
  std::vector<Incentive> output_incentives;
  std::vector<double> input_payments;
  std::vector<double> output_payments;
  double total_payment() const;
};

/// Operator dual update from the measurement `y` (at state.u), incentives,
/// best responses and assembly of the next u (and z).
RoundOutcome market_round(Market & market, const OperatorState & state, const VectorXd & y, const MatrixXd & J,
                          const HyperParams & hp);

/// Operator state before round 1: zero duals, u^0, and for PRIME-H the actors' own z^0.
OperatorState init_operator(Market & market, const VectorXd & u0, const VectorXd & y0);

struct MarketRun
{
  Trajectory trajectory;
  std::vector<LedgerEntry> ledger;
};

/// Closed loop in market mode with the same stopping rule and record layout as run().
/// For PRIME-H, kkt_duals are scattered from the output actors' shadow prices
/// into the rows of `spec.output_set` when every actor reports them.
MarketRun run_market(MarketVariant variant, const ProblemSpec & spec, const Plant & plant, const HyperParams & hp,
                     MeasurementNoise & noise, const VectorXd & u0, const RunOptions & options = {});

/// CSV: round,role,actor_id,payment,decision with decision entries joined by ';'.
void write_ledger_csv(std::ostream & out, const std::vector<LedgerEntry> & ledger);

}  // namespace ofo
