#include "doctest.h"
#include "test_support.hpp"

#include "ofo/controllers.hpp"
#include "ofo/scenarios.hpp"

using namespace ofo;
using ofo::testing::kInf;
using ofo::testing::Rng;

namespace {

ProblemSpec scalar_spec(QuadraticCost input_cost, QuadraticCost output_cost, PolyhedralSet input_set,
                        PolyhedralSet output_set)
{
  ProblemSpec spec;
  spec.input_dim = input_cost.dim();
  spec.output_dim = output_cost.dim();
  spec.input_cost = std::move(input_cost);
  spec.output_cost = std::move(output_cost);
  spec.input_set = std::move(input_set);
  spec.output_set = std::move(output_set);
  spec.validate();
  return spec;
}

Measurement exact(const Plant & plant, const VectorXd & u)
{
  VectorXd y = plant.evaluate(u);
  return {y, y};
}

}  // namespace

TEST_CASE("projected primal: hand-evaluated step on a linear plant")
{
  // phi_u = (u - 3)^2, y = u, C_u = C_y = [0, 1], alpha = 0.1, u_k = 0.5
  const ProblemSpec spec = scalar_spec(QuadraticCost(MatrixXd{{1.0}}, VectorXd{{-6.0}}, 9.0), QuadraticCost::zero(1),
                                       PolyhedralSet::box(VectorXd{{0.0}}, VectorXd{{1.0}}),
                                       PolyhedralSet::box(VectorXd{{0.0}}, VectorXd{{1.0}}));
  const LinearPlant plant(MatrixXd{{1.0}}, VectorXd{{0.0}});
  HyperParams hp;
  hp.alpha = 0.1;
  const PrimalState next = step_projected_primal(init_projected_primal(spec, VectorXd{{0.5}}), spec, plant, hp,
                                                 exact(plant, VectorXd{{0.5}}));
  CHECK(next.u(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("projected primal: appendix infeasibility cases")
{
  {
    const Scenario s = build_appendix_scenario(AppendixCase::Fig5a);
    const auto plant = s.make_plant();
    const HyperParams hp;
    bool thrown = false;
    try {
      step_projected_primal(init_projected_primal(s.spec, s.u0), s.spec, *plant, hp, exact(*plant, s.u0));
    } catch (const InfeasibleLinearization & e) {
      thrown = true;
      const auto & lin = e.linearized_output_set();
      REQUIRE(lin.A().rows() == 1);
      CHECK(lin.b()(0) / lin.A()(0, 0) == doctest::Approx(0.7).epsilon(0.01));
      const auto rows = e.feasible_set().rows();
      CHECK(e.certificate().minCoeff() >= 0.0);
      CHECK((rows.G.transpose() * e.certificate()).norm() <= 1e-9);
      CHECK(rows.h.dot(e.certificate()) < 0.0);
    }
    CHECK(thrown);
  }
  {
    const Scenario s = build_appendix_scenario(AppendixCase::Fig5b);
    const auto plant = s.make_plant();
    const HyperParams hp;
    const Measurement noisy{plant->evaluate(s.u0), *s.injected_measurement};
    CHECK(noisy.y_true(0) == doctest::Approx(32.0 / 27.0));
    CHECK(noisy.y_true(0) <= 1.2);
    CHECK_THROWS_AS(step_projected_primal(init_projected_primal(s.spec, s.u0), s.spec, *plant, hp, noisy),
                    InfeasibleLinearization);
    CHECK_NOTHROW(step_projected_primal(init_projected_primal(s.spec, s.u0), s.spec, *plant, hp, exact(*plant, s.u0)));
  }
}

TEST_CASE("primal-dual: dual update formula and inactive constraints")
{
  const ProblemSpec spec = scalar_spec(QuadraticCost(MatrixXd{{1.0}}, VectorXd{{-1.0}}), QuadraticCost::linear(VectorXd{{0.3}}),
                                       PolyhedralSet::box(VectorXd{{-2.0}}, VectorXd{{2.0}}),
                                       PolyhedralSet::box(VectorXd{{-kInf}}, VectorXd{{1.0}}));
  const LinearPlant plant(MatrixXd{{2.0}}, VectorXd{{0.0}});
  HyperParams hp;
  hp.rho = 2.0;
  hp.alpha = 0.1;

  // y = 2 u = 1.5 violates y <= 1 by 0.5
  const DualizedYState viol = step_primal_dual_y(init_dualized_y(spec, VectorXd{{0.75}}), spec, plant, hp,
                                                 exact(plant, VectorXd{{0.75}}));
  CHECK(viol.lambda_y(0) == doctest::Approx(1.0));

  // y = 0.2 strictly feasible: lambda stays 0 and the step is plain projected gradient
  const VectorXd u{{0.1}};
  const DualizedYState in = step_primal_dual_y(init_dualized_y(spec, u), spec, plant, hp, exact(plant, u));
  CHECK(in.lambda_y(0) == 0.0);
  const double grad = 2.0 * 0.1 - 1.0 + 2.0 * 0.3;
  CHECK(in.u(0) == doctest::Approx(0.1 - 0.1 * grad).epsilon(1e-14));
}

TEST_CASE("PRIME-Y: heavy damping and the lambda = 0 prox reduction")
{
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = rng.integer(1, 5), p = rng.integer(1, 3);
    const VectorXd uk = rng.vector(m, -0.5, 0.5);
    const QuadraticCost phi_u(rng.spd(m, 0.1), rng.vector(m));
    ProblemSpec spec = scalar_spec(phi_u, QuadraticCost::zero(p), ofo::testing::random_polyhedron(rng, uk, 2),
                                   PolyhedralSet::box(VectorXd::Constant(p, -100.0), VectorXd::Constant(p, 100.0)));
    const LinearPlant plant(rng.matrix(p, m), rng.vector(p));
    HyperParams hp;
    hp.gamma_u = rng.uniform(0.2, 2.0);
    const DualizedYState next = step_prime_y(init_dualized_y(spec, uk), spec, plant, hp, exact(plant, uk));
    CHECK(next.lambda_y.cwiseAbs().maxCoeff() == 0.0);
    const QpSolution oracle = prox(phi_u, spec.input_set, hp.gamma_u, uk, VectorXd());
    CHECK((next.u - oracle.x).cwiseAbs().maxCoeff() <= 1e-10);

    hp.gamma_u = 1e8;
    const DualizedYState damped = step_prime_y(init_dualized_y(spec, uk), spec, plant, hp, exact(plant, uk));
    CHECK((damped.u - uk).norm() <= 1e-6);
  }
}

TEST_CASE("PRIME-Y rejects gamma_u = 0 with a singular input cost")
{
  const ProblemSpec spec = scalar_spec(QuadraticCost::zero(1), QuadraticCost::zero(1), PolyhedralSet::whole_space(1),
                                       PolyhedralSet::whole_space(1));
  const LinearPlant plant(MatrixXd{{1.0}}, VectorXd{{0.0}});
  HyperParams hp;
  hp.gamma_u = 0.0;
  CHECK_THROWS_AS(step_prime_y(init_dualized_y(spec, VectorXd{{0.0}}), spec, plant, hp, exact(plant, VectorXd{{0.0}})),
                  NotStrictlyConvex);
}

TEST_CASE("PRIME-H: integrator formula and steady state")
{
  ProblemSpec spec = scalar_spec(QuadraticCost::zero(2), QuadraticCost::zero(2),
                                 PolyhedralSet::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)),
                                 PolyhedralSet::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)));
  const LinearPlant plant(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  HyperParams hp;
  hp.rho = 1.0;

  const VectorXd u{{0.5, 0.2}};
  PrimeHState s = init_prime_h(spec, u, plant.evaluate(u));
  s.z = VectorXd{{0.3, 0.3}};
  const PrimeHState next = step_prime_h(s, spec, plant, hp, exact(plant, u));
  CHECK((next.nu_h - VectorXd{{0.2, -0.1}}).norm() <= 1e-15);

  // y = z, nu = 0, zero costs: both prox steps return their anchors
  const PrimeHState rest = init_prime_h(spec, u, plant.evaluate(u));
  const PrimeHState same = step_prime_h(rest, spec, plant, hp, exact(plant, u));
  CHECK((same.u - rest.u).norm() <= 1e-15);
  CHECK((same.z - rest.z).norm() <= 1e-15);
  CHECK(same.nu_h.norm() <= 1e-15);
}

TEST_CASE("PRIME-H z-update equals the expanded augmented-Lagrangian prox")
{
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = rng.integer(1, 4), p = rng.integer(1, 4);
    const VectorXd uk = rng.vector(m, -0.3, 0.3);
    const LinearPlant plant(rng.matrix(p, m), rng.vector(p, -0.2, 0.2));
    ProblemSpec spec = scalar_spec(QuadraticCost(rng.spd(m), rng.vector(m)),
                                   QuadraticCost(rng.spd(p, 0.0), rng.vector(p)),
                                   PolyhedralSet::box(VectorXd::Constant(m, -1.0), VectorXd::Constant(m, 1.0)),
                                   PolyhedralSet::box(VectorXd::Constant(p, -0.4), VectorXd::Constant(p, 0.4)));
    HyperParams hp{0.05, rng.uniform(0.5, 5.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
    PrimeHState s = init_prime_h(spec, uk, plant.evaluate(uk));
    s.nu_h = rng.vector(p);
    const Measurement meas = exact(plant, uk);
    const PrimeHState next = step_prime_h(s, spec, plant, hp, meas);

    // Direct assembly: (rho + gamma_z)/2 z'z + z'Q_y z + (c_y - nu+ - rho y - gamma_z z_k)' z
    const VectorXd nu = s.nu_h + hp.rho * (meas.y - s.z);
    const MatrixXd Q = spec.output_cost.Q() + 0.5 * (hp.rho + hp.gamma_z) * MatrixXd::Identity(p, p);
    const VectorXd c = spec.output_cost.c() - nu - hp.rho * meas.y - hp.gamma_z * s.z;
    const auto oracle = ofo::testing::enumerate_qp(Q, c, spec.output_set.rows().G, spec.output_set.rows().h);
    REQUIRE(oracle);
    CHECK((next.z - *oracle).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(spec.output_set.contains(next.z));
  }
}

TEST_CASE("run: identity plant with trivial costs settles immediately")
{
  const ProblemSpec spec = scalar_spec(QuadraticCost::zero(2), QuadraticCost::zero(2),
                                       PolyhedralSet::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)),
                                       PolyhedralSet::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)));
  const LinearPlant plant(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  for (auto kind : {ControllerKind::ProjectedPrimal, ControllerKind::PrimalDual, ControllerKind::PrimeY,
                    ControllerKind::PrimeH}) {
    MeasurementNoise noise;
    const Trajectory t = run(kind, spec, plant, HyperParams{}, noise, VectorXd{{0.2, -0.3}}, {100, 1e-12});
    CHECK(t.status == RunStatus::Converged);
    CHECK(t.records.size() <= 3);
  }
}

TEST_CASE("run: budget, record count and seeded determinism")
{
  const Scenario s = build_toy_scenario();
  const auto plant = s.make_plant();
  for (auto kind : {ControllerKind::ProjectedPrimal, ControllerKind::PrimalDual, ControllerKind::PrimeY,
                    ControllerKind::PrimeH}) {
    MeasurementNoise n1(0.01, 5), n2(0.01, 5);
    const Trajectory a = run(kind, s.spec, *plant, s.hp, n1, s.u0, {40, 1e-10});
    const Trajectory b = run(kind, s.spec, *plant, s.hp, n2, s.u0, {40, 1e-10});
    REQUIRE(a.records.size() == b.records.size());
    CHECK(a.records.size() <= 41);
    for (size_t k = 0; k < a.records.size(); ++k) {
      CHECK(a.records[k].k == static_cast<int>(k));
      CHECK((a.records[k].u.array() == b.records[k].u.array()).all());
      CHECK((a.records[k].y_measured.array() == b.records[k].y_measured.array()).all());
    }
  }
}

TEST_CASE("run: appendix fig5a flags infeasibility at the first step")
{
  const Scenario s = build_appendix_scenario(AppendixCase::Fig5a);
  const auto plant = s.make_plant();
  MeasurementNoise noise;
  const Trajectory t = run(ControllerKind::ProjectedPrimal, s.spec, *plant, s.hp, noise, s.u0, {50, 1e-12});
  CHECK(t.status == RunStatus::InfeasibleLinearization);
  CHECK(t.flagged_at == 0);
  CHECK(t.records.size() == 1);
}

TEST_CASE("closed-loop invariants under noise: duals, input and target feasibility")
{
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LqOptions o;
    o.input_dim = 3 + Index(seed % 3);
    o.output_dim = 2 + Index(seed % 2);
    o.quadratic_output_cost = seed % 2 == 1;
    const Scenario s = random_lq_scenario(seed, o);
    const auto plant = s.make_plant();
    for (auto kind : {ControllerKind::ProjectedPrimal, ControllerKind::PrimalDual, ControllerKind::PrimeY,
                      ControllerKind::PrimeH}) {
      MeasurementNoise noise(0.02, seed);
      const Trajectory t = run(kind, s.spec, *plant, s.hp, noise, s.u0, {150, 0.0});
      for (const auto & r : t.records) {
        CHECK(s.spec.input_set.contains(r.u));
        if (kind == ControllerKind::PrimalDual || kind == ControllerKind::PrimeY) CHECK(r.duals.minCoeff() >= 0.0);
        if (kind == ControllerKind::PrimeH) CHECK(s.spec.output_set.contains(r.z));
      }
    }
  }
}

TEST_CASE("noise-free convex LQ: fixed points satisfy KKT and match each other")
{
  for (std::uint64_t seed = 100; seed < 106; ++seed) {
    LqOptions o;
    o.input_dim = 4;
    o.output_dim = 3;
    o.quadratic_output_cost = seed % 2 == 0;
    const Scenario s = random_lq_scenario(seed, o);
    const auto plant = s.make_plant();
    std::vector<VectorXd> limits;
    for (auto kind : {ControllerKind::PrimalDual, ControllerKind::PrimeY, ControllerKind::PrimeH}) {
      MeasurementNoise noise;
      const Trajectory t = run(kind, s.spec, *plant, s.hp, noise, s.u0, {5000, 1e-10});
      REQUIRE(t.status == RunStatus::Converged);
      const auto & last = t.records.back();
      CHECK(kkt_residual(s.spec, *plant, last.u, last.kkt_duals.cwiseMax(0.0)) <= 1e-6);
      if (kind == ControllerKind::PrimeH) CHECK((last.y_true - last.z).norm() <= 1e-6);
      limits.push_back(last.u);
    }
    CHECK((limits[0] - limits[1]).norm() <= 1e-5);
    CHECK((limits[0] - limits[2]).norm() <= 1e-5);
  }
}

TEST_CASE("HyperParams validation and name round trip")
{
  CHECK_THROWS_AS((HyperParams{0.0, 1.0, 1.0, 1.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((HyperParams{0.1, 0.0, 1.0, 1.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((HyperParams{0.1, 1.0, -1.0, 1.0}.validate()), InvalidArgument);
  for (auto kind : {ControllerKind::ProjectedPrimal, ControllerKind::PrimalDual, ControllerKind::PrimeY,
                    ControllerKind::PrimeH})
    CHECK(controller_from_string(to_string(kind)) == kind);
  CHECK_THROWS_AS(controller_from_string("gradient"), InvalidArgument);
}
