#include "ofo/scenarios.hpp"

#include "ofo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ofo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<IndexBlock> contiguous_blocks(Index n, Index count)
{
  count = std::clamp<Index>(count, 1, n);
  std::vector<IndexBlock> blocks(static_cast<size_t>(count));
  for (Index i = 0; i < n; ++i) blocks[static_cast<size_t>(i * count / n)].push_back(i);
  return blocks;
}

}  // namespace

Scenario build_toy_scenario()
{
  Scenario s;
  s.name = "toy";
  auto & spec = s.spec;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.input_cost = QuadraticCost(MatrixXd::Identity(2, 2), VectorXd{{-0.5, -0.5}});
  spec.output_cost = QuadraticCost::linear(VectorXd{{5.0}});
  spec.input_set = PolyhedralSet::box(VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0));
  spec.output_set = PolyhedralSet::box(VectorXd{{0.0}}, VectorXd{{1.0}});
  spec.validate();
  s.make_plant = [] {
    return std::make_shared<FunctionPlant>(
        2, 1,
        [](const VectorXd & u) { return VectorXd{{u(1) * u(1) * u(1) + u(0) - u(1) + 0.5}}; },
        [](const VectorXd & u) { return MatrixXd{{1.0, 3.0 * u(1) * u(1) - 1.0}}; });
  };
  s.u0 = VectorXd{{-0.5, 0.5}};
  // Tuned for the qualitative comparison; the defaults (rho = 10) damp the
  // output-cost-driven transient of the dualized-output law.
  s.hp = HyperParams{0.05, 1.0, 1.0, 1.0};
  return s;
}

Scenario build_appendix_scenario(AppendixCase which)
{
  Scenario s;
  const bool a = which == AppendixCase::Fig5a;
  s.name = a ? "appendix_fig5a" : "appendix_fig5b";
  auto & spec = s.spec;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.input_cost = QuadraticCost::zero(1);
  spec.output_cost = QuadraticCost::zero(1);
  spec.input_set = PolyhedralSet::box(VectorXd{{-2.0}}, VectorXd{{0.0}});
  spec.output_set = PolyhedralSet::box(VectorXd{{-kInf}}, VectorXd{{a ? 1.0 : 1.2}});
  spec.validate();
  s.make_plant = [] {
    return std::make_shared<FunctionPlant>(
        1, 1, [](const VectorXd & u) { return VectorXd{{2.0 * u(0) * u(0) + u(0) * u(0) * u(0)}}; },
        [](const VectorXd & u) { return MatrixXd{{4.0 * u(0) + 3.0 * u(0) * u(0)}}; });
  };
  s.u0 = VectorXd{{a ? -1.31 : -4.0 / 3.0}};
  if (!a) s.injected_measurement = VectorXd{{1.22}};
  return s;
}

Scenario random_lq_scenario(std::uint64_t seed, const LqOptions & options)
{
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  const Index m = options.input_dim;
  const Index p = options.output_dim;
  auto mat = [&](Index r, Index c) {
    MatrixXd M(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) M(i, j) = unit(gen);
    return M;
  };
  auto vec = [&](Index n) { return VectorXd(mat(n, 1)); };

  Scenario s;
  s.name = "lq_random";
  auto & spec = s.spec;
  spec.input_dim = m;
  spec.output_dim = p;
  spec.input_blocks = contiguous_blocks(m, options.input_actors);
  spec.output_blocks = contiguous_blocks(p, options.output_actors);

  // Block-diagonal curvature so every actor's private cost is separable.
  MatrixXd Qu = MatrixXd::Zero(m, m);
  for (const auto & block : spec.input_blocks) {
    const Index k = static_cast<Index>(block.size());
    const MatrixXd B = mat(k, k);
    const MatrixXd Qb = B * B.transpose() / static_cast<double>(k) + 0.3 * MatrixXd::Identity(k, k);
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b) Qu(block[size_t(a)], block[size_t(b)]) = Qb(a, b);
  }
  spec.input_cost = QuadraticCost(Qu, 2.0 * vec(m));

  MatrixXd Qy = MatrixXd::Zero(p, p);
  if (options.quadratic_output_cost)
    for (const auto & block : spec.output_blocks)
      for (Index i : block) Qy(i, i) = 0.2 + 0.3 * pos(gen);
  spec.output_cost = QuadraticCost(Qy, vec(p));

  spec.input_set = PolyhedralSet::box(VectorXd::Constant(m, -1.0) - 0.5 * VectorXd(mat(m, 1).cwiseAbs()),
                                      VectorXd::Constant(m, 1.0) + 0.5 * VectorXd(mat(m, 1).cwiseAbs()));
  const MatrixXd H = mat(p, m);
  const VectorXd y_offset = 0.5 * vec(p);
  const VectorXd u_interior = 0.5 * vec(m);
  const VectorXd y_interior = H * u_interior + y_offset;
  VectorXd lo(p), hi(p);
  for (Index i = 0; i < p; ++i) {
    lo(i) = y_interior(i) - 0.1 - 0.4 * pos(gen);
    hi(i) = y_interior(i) + 0.1 + 0.4 * pos(gen);
  }
  spec.output_set = PolyhedralSet::box(lo, hi);
  spec.validate();

  s.make_plant = [H, y_offset] { return std::make_shared<LinearPlant>(H, y_offset); };
  s.u0 = VectorXd::Zero(m);
  s.hp = HyperParams{0.05, 1.0, 1.0, 1.0};
  return s;
}

Scenario grid_scenario(const GridNetwork & net, const GridScenarioOptions & options)
{
  const Index B = net.pq_count();
  const Index m = 2 * B;
  if (!(options.v_min < options.v_max)) throw InvalidArgument("voltage box needs v_min < v_max");
  std::vector<bool> prosumer(static_cast<size_t>(B), false);
  for (Index bus : options.prosumer_buses) {
    if (bus < 1 || bus > B) throw InvalidArgument("prosumer bus " + std::to_string(bus) + " is not a PQ bus");
    if (prosumer[size_t(bus - 1)]) throw InvalidArgument("prosumer bus " + std::to_string(bus) + " listed twice");
    prosumer[size_t(bus - 1)] = true;
  }

  Scenario s;
  s.name = "grid";
  auto & spec = s.spec;
  spec.input_dim = m;
  spec.output_dim = m;
  MatrixXd Qu = MatrixXd::Zero(m, m);
  VectorXd cu = VectorXd::Zero(m);
  VectorXd lo(m), hi(m);
  s.u0 = VectorXd::Zero(m);
  for (Index b = 0; b < B; ++b) {
    spec.input_blocks.push_back({2 * b, 2 * b + 1});
    if (prosumer[size_t(b)]) {
      Qu(2 * b, 2 * b) = 0.1;
      Qu(2 * b + 1, 2 * b + 1) = 0.1;
      cu(2 * b) = 0.1;
      lo.segment(2 * b, 2) << 0.0, -2.0;
      hi.segment(2 * b, 2) << 12.5, 2.0;
    } else {
      const Bus & bus = net.buses()[size_t(b + 1)];
      lo.segment(2 * b, 2) << -bus.p_load, -bus.q_load;
      hi.segment(2 * b, 2) = lo.segment(2 * b, 2);
      s.u0.segment(2 * b, 2) = lo.segment(2 * b, 2);
    }
  }
  spec.input_cost = QuadraticCost(Qu, cu);
  spec.output_cost = QuadraticCost::zero(m);
  spec.input_set = PolyhedralSet::box(lo, hi);
  VectorXd ylo(m), yhi(m);
  ylo << VectorXd::Constant(B, options.v_min), VectorXd::Constant(B, -kInf);
  yhi << VectorXd::Constant(B, options.v_max), VectorXd::Constant(B, kInf);
  spec.output_set = PolyhedralSet::box(ylo, yhi);
  spec.validate();

  const VectorXd nominal = s.u0;
  const SensitivityMode mode = options.sensitivity;
  const auto blocks = spec.input_blocks;
  s.make_plant = [net, blocks, mode, nominal] { return grid_plant(net, blocks, mode, nominal); };
  for (Index b = 0; b < B; ++b) s.noisy_outputs.push_back(b);
  return s;
}

GridNetwork builtin_feeder()
{
  FeederOptions o;
  o.pq_buses = 14;
  o.r = 0.002;
  o.x = 0.002;
  o.p_load = 0.4;
  o.q_load = 0.2;
  o.lateral_start = 10;
  o.lateral_root = 5;
  return radial_feeder(o);
}

Scenario build_grid_scenario(SensitivityMode mode)
{
  GridScenarioOptions o;
  o.prosumer_buses = {9, 14};
  o.sensitivity = mode;
  Scenario s = grid_scenario(builtin_feeder(), o);
  s.name = "grid_feeder";
  return s;
}

std::vector<std::string> builtin_scenario_names()
{
  return {"toy", "appendix_fig5a", "appendix_fig5b", "grid_feeder", "lq_random"};
}

}  // namespace ofo
