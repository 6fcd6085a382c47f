#include <doctest.h>

#include <cmath>

#include "gridmpc/dual_ascent.hpp"
#include "gridmpc/oracle.hpp"
#include "gridmpc/rng.hpp"
#include "gridmpc/scenario.hpp"
#include "test_support.hpp"

using namespace gridmpc;
using gridmpc::testing::fd_dual_gradient;
using gridmpc::testing::random_forecast;
using gridmpc::testing::random_model;
using gridmpc::testing::tiny_case;

namespace {

// single unconstrained coordinate: quad/2 x^2 + lin x + c x
LocalProblem scalar_problem(double quad, double lin) {
  LocalProblem lp;
  lp.node = 1;
  lp.K = 1;
  lp.n = 1;
  lp.m = 1;
  lp.A = SpMat(1, 1);  // row 0: 0 <= a, never active
  lp.a = Eigen::VectorXd::Zero(1);
  lp.B_self = SpMat(1, 1);
  lp.b = Eigen::VectorXd::Zero(1);
  lp.cost_quad = Eigen::VectorXd::Constant(1, quad);
  lp.cost_lin = Eigen::VectorXd::Constant(1, lin);
  return lp;
}

double grid_minimize(const LocalProblem& lp, double c, double lo, double hi, double step) {
  double best_x = lo, best = std::numeric_limits<double>::infinity();
  for (double x = lo; x <= hi; x += step) {
    const double v = 0.5 * lp.cost_quad(0) * x * x + (lp.cost_lin(0) + c) * x;
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace

TEST_CASE("local_primal_argmin closed form agrees with a grid search") {
  {
    auto lp = scalar_problem(2.0, 110.25);
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(1);
    // A = 0, so drive the linear shift through B_self^T zeta
    lp.B_self.coeffRef(0, 0) = 1.0;
    Eigen::VectorXd zeta = Eigen::VectorXd::Constant(1, -120.25);
    const auto x = local_primal_argmin(lp, lam, zeta, std::vector<const Eigen::VectorXd*>{});
    CHECK(x(0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(grid_minimize(lp, -120.25, -100.0, 100.0, 0.01) == doctest::Approx(5.0).epsilon(1e-3));
  }
  {
    auto lp = scalar_problem(0.2, 0.6);
    lp.B_self.coeffRef(0, 0) = 1.0;
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd zeta = Eigen::VectorXd::Constant(1, -1.0);
    const auto x = local_primal_argmin(lp, lam, zeta, std::vector<const Eigen::VectorXd*>{});
    CHECK(x(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(grid_minimize(lp, -1.0, -100.0, 100.0, 0.01) == doctest::Approx(2.0).epsilon(1e-3));
  }
}

TEST_CASE("local_primal_argmin with zero duals and zero linear cost is the origin") {
  auto lp = scalar_problem(1.0, 0.0);
  const auto x = local_primal_argmin(lp, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                                     std::vector<const Eigen::VectorXd*>{});
  CHECK(x(0) == 0.0);
}

TEST_CASE("local_primal_argmin rejects a vanishing quadratic coefficient") {
  auto lp = scalar_problem(0.0, 1.0);
  CHECK_THROWS_AS(local_primal_argmin(lp, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                                      std::vector<const Eigen::VectorXd*>{}),
                  std::domain_error);
}

TEST_CASE("dual_gradient signs follow the constraint residuals") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);

  // strictly interior assignment: every gradient coordinate negative
  std::map<int, Eigen::VectorXd> x_star;
  Eigen::VectorXd x1(2), x2(1);
  x1 << 50.0, 12.0;  // P in (0,100), F12 in (0,20), balance slack everywhere
  x2 << 1.0;
  x_star[1] = x1;
  x_star[2] = x2;
  auto g = dual_gradient(problem, x_star);
  CHECK(g.max_positive_part() == 0.0);
  CHECK(g.g_lambda.at(1).maxCoeff() < 0.0);
  CHECK(g.g_zeta.at(2).maxCoeff() < 0.0);

  // an exactly active row has a zero residual
  x1 << 100.0, 12.0;  // P at its cap
  x_star[1] = x1;
  g = dual_gradient(problem, x_star);
  CHECK(g.g_lambda.at(1)(0) == 0.0);
}

TEST_CASE("analytic dual gradient matches central finite differences") {
  std::mt19937_64 eng(404);
  for (std::uint64_t seed = 50; seed < 54; ++seed) {
    const auto model = random_model(seed);
    const auto problem = build_compact(model, random_forecast(model, seed));
    auto it = zero_dual_iterate(problem);
    for (int i : problem.nodes) {
      for (int r = 0; r < it.lambda[i].size(); ++r) it.lambda[i](r) = rng::uniform(eng, 0.0, 2.0);
      for (int r = 0; r < it.zeta[i].size(); ++r) it.zeta[i](r) = rng::uniform(eng, 0.0, 2.0);
    }
    for (int i : problem.nodes) {
      it.x_star[i] = local_primal_argmin(problem.local(i), it.lambda[i], it.zeta[i], it.zeta);
    }
    const auto analytic = dual_gradient(problem, it.x_star);
    const auto fd = fd_dual_gradient(problem, it.lambda, it.zeta, 1e-5);
    for (int i : problem.nodes) {
      const double scale_l = 1.0 + analytic.g_lambda.at(i).lpNorm<Eigen::Infinity>();
      CHECK((analytic.g_lambda.at(i) - fd.g_lambda.at(i)).lpNorm<Eigen::Infinity>() / scale_l <
            1e-5);
      const double scale_z = 1.0 + analytic.g_zeta.at(i).lpNorm<Eigen::Infinity>();
      CHECK((analytic.g_zeta.at(i) - fd.g_zeta.at(i)).lpNorm<Eigen::Infinity>() / scale_z < 1e-5);
    }
  }
}

TEST_CASE("dual_value of a single unconstrained generator at zero duals") {
  NetworkModel m;
  m.num_nodes = 1;
  m.horizon = 1;
  GeneratorParams g;
  g.alpha = 2.0;
  g.omega = 110.25;
  g.p_max = 1000.0;
  g.ramp_lo = -1000.0;
  g.ramp_hi = 1000.0;
  g.p_prev = 500.0;
  m.generators[1] = g;
  ForecastSeries fs;
  fs.horizon = 1;
  fs.epsilon = 0.25;
  fs.demand_mean[{1, 0}] = -1000.0;  // balance row never binds
  fs.demand_var[{1, 0}] = 0.0;
  fs.cap_mean[{1, 0}] = 1000.0;
  fs.cap_var[{1, 0}] = 0.0;
  const auto problem = build_compact(m, fs);
  const auto it = zero_dual_iterate(problem);
  CHECK(dual_value(problem, it.lambda, it.zeta) ==
        doctest::Approx(-110.25 * 110.25 / 4.0).epsilon(1e-12));
}

TEST_CASE("dual_value is concave along random segments") {
  const auto model = random_model(60);
  const auto problem = build_compact(model, random_forecast(model, 60));
  std::mt19937_64 eng(123);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = zero_dual_iterate(problem);
    auto b = zero_dual_iterate(problem);
    auto mid = zero_dual_iterate(problem);
    for (int i : problem.nodes) {
      for (int r = 0; r < a.lambda[i].size(); ++r) {
        a.lambda[i](r) = rng::uniform(eng, 0.0, 3.0);
        b.lambda[i](r) = rng::uniform(eng, 0.0, 3.0);
        mid.lambda[i](r) = 0.5 * (a.lambda[i](r) + b.lambda[i](r));
      }
      for (int r = 0; r < a.zeta[i].size(); ++r) {
        a.zeta[i](r) = rng::uniform(eng, 0.0, 3.0);
        b.zeta[i](r) = rng::uniform(eng, 0.0, 3.0);
        mid.zeta[i](r) = 0.5 * (a.zeta[i](r) + b.zeta[i](r));
      }
    }
    const double va = dual_value(problem, a.lambda, a.zeta);
    const double vb = dual_value(problem, b.lambda, b.zeta);
    const double vm = dual_value(problem, mid.lambda, mid.zeta);
    CHECK(vm >= 0.5 * va + 0.5 * vb - 1e-9 * (1.0 + std::abs(vm)));
  }
}

TEST_CASE("dual_step projects onto the nonnegative orthant") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  auto it = zero_dual_iterate(problem);
  // hand-placed minimizers giving negative gradients on some rows
  it.x_star[1] = Eigen::VectorXd::Zero(2);
  it.x_star[1] << 50.0, 12.0;
  it.x_star[2] = Eigen::VectorXd::Constant(1, 1.0);
  const auto next = dual_step(problem, it, 0.01);
  for (int i : problem.nodes) {
    CHECK(next.lambda.at(i).minCoeff() >= 0.0);
    CHECK(next.zeta.at(i).minCoeff() >= 0.0);
  }
  // interior coordinate with positive gradient moves up by step * gradient
  auto it2 = it;
  it2.lambda[1](0) = 1.0;                   // P <= cap row
  it2.x_star[1] << 300.0, 12.0;             // violates the cap by 200
  const auto g = dual_gradient(problem, it2.x_star);
  const auto next2 = dual_step(problem, it2, 0.01);
  CHECK(next2.lambda.at(1)(0) ==
        doctest::Approx(1.0 + 0.01 * g.g_lambda.at(1)(0)).epsilon(1e-12));
}

TEST_CASE("dual_step at the optimal duals is a fixed point") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  const auto qp = assemble_global(problem);
  const auto ref = solve_reference(qp, 1e-12, 4000000);
  REQUIRE(ref.converged);
  DualIterate it;
  it.lambda = ref.lambda;
  it.zeta = ref.zeta;
  for (int i : problem.nodes) {
    it.x_star[i] = local_primal_argmin(problem.local(i), it.lambda[i], it.zeta[i], it.zeta);
  }
  const double L = lipschitz_bound(problem);
  const auto next = dual_step(problem, it, 1.0 / L);
  for (int i : problem.nodes) {
    CHECK((next.lambda.at(i) - it.lambda.at(i)).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((next.zeta.at(i) - it.zeta.at(i)).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("lipschitz_bound on a scalar system") {
  auto lp = scalar_problem(2.0, 0.0);
  lp.A.coeffRef(0, 0) = 1.0;  // one constraint row [1]
  CompactProblem problem;
  problem.K = 1;
  problem.nodes = {1};
  problem.x_offset[1] = 0;
  problem.total_n = 1;
  problem.sigma_min = 2.0;
  problem.l_max = 2.0;
  problem.locals.emplace(1, lp);
  // H stacks the A row and the (zero) coupling row
  CHECK(lipschitz_bound(problem) == doctest::Approx(0.5).epsilon(1e-6));

  auto& stored = problem.locals.at(1);
  stored.A.coeffRef(0, 0) = 2.0;  // scaling H doubles rho_max, quadruples the bound
  CHECK(lipschitz_bound(problem) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("lipschitz_bound is finite on the benchmark and the safe step converges") {
  const auto sc = make_benchmark_scenario(42, 3);
  const auto problem = build_compact(sc.model, sc.forecast_at(0));
  const double L = lipschitz_bound(problem);
  CHECK(L > 0.0);
  CHECK(std::isfinite(L));
}

TEST_CASE("run_dual_ascent solves the tiny instance to the brute-force optimum") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  const auto qp = assemble_global(problem);
  const Eigen::VectorXd brute = enumerate_tiny(qp, 0.01);

  DualAscentConfig config;
  config.max_iters = 200000;
  const auto res = run_dual_ascent(problem, config);
  REQUIRE(res.converged);
  CHECK((res.x - brute).lpNorm<Eigen::Infinity>() < 1e-4);
  CHECK(res.max_ascent_violation <= 1e-9);
  for (int i : problem.nodes) {
    CHECK(res.iterate.lambda.at(i).minCoeff() >= 0.0);
    CHECK(res.iterate.zeta.at(i).minCoeff() >= 0.0);
  }
}

TEST_CASE("run_dual_ascent warm-started at the optimal duals stops immediately") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  const auto qp = assemble_global(problem);
  const auto ref = solve_reference(qp, 1e-12, 4000000);
  REQUIRE(ref.converged);
  DualIterate warm;
  warm.lambda = ref.lambda;
  warm.zeta = ref.zeta;
  DualAscentConfig config;
  config.warm_start = &warm;
  const auto res = run_dual_ascent(problem, config);
  CHECK(res.converged);
  CHECK(res.iterations <= 1);
}

TEST_CASE("dual ascent is monotone and recovers optimality structure on random instances") {
  for (std::uint64_t seed = 70; seed < 73; ++seed) {
    const auto model = random_model(seed);
    const auto problem = build_compact(model, random_forecast(model, seed));
    DualAscentConfig config;
    config.max_iters = 120000;
    const auto res = run_dual_ascent(problem, config);
    REQUIRE_MESSAGE(res.converged, "seed ", seed);
    CHECK(res.max_ascent_violation <= 1e-9);

    // strong duality and complementary slackness at the recovered point
    const auto qp = assemble_global(problem);
    const double cost = total_cost(problem, res.x);
    const double psi = dual_value(problem, res.iterate.lambda, res.iterate.zeta);
    CHECK(std::abs(cost - psi) <= 1e-4 * (1.0 + std::abs(cost)));
    Eigen::VectorXd eta(qp.stacked.rows);
    for (int i : problem.nodes) {
      eta.segment(qp.stacked.local_row.at(i), problem.local(i).m) = res.iterate.lambda.at(i);
      eta.segment(qp.stacked.coupling_row.at(i), problem.K) = res.iterate.zeta.at(i);
    }
    CHECK(complementary_slackness(qp, res.x, eta) <= 1e-4 * (1.0 + std::abs(cost)));
  }
}
