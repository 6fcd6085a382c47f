#include <doctest.h>

#include <cmath>

#include "gridmpc/mpc.hpp"
#include "gridmpc/scenario.hpp"
#include "test_support.hpp"

using namespace gridmpc;
using gridmpc::testing::tiny_case;

namespace {

Scenario tiny_scenario_with_rule() {
  const auto tc = tiny_case();
  Scenario sc;
  sc.model = tc.model;
  sc.epsilon = 0.25;
  DemandRule rule;
  rule.profile = {10.0, 12.0, 8.0, 11.0};
  rule.offset_amp = 2.0;
  rule.offset_mod = 3;
  rule.variance = 0.5;
  rule.wrap = true;
  sc.demand_rule = rule;
  // keep the load on node 2 modest so the tiny line suffices
  return sc;
}

}  // namespace

TEST_CASE("step_plant applies the storage dynamics") {
  NetworkModel m;
  m.num_nodes = 1;
  m.horizon = 1;
  StorageParams s;
  s.eff = 0.95;
  s.c = 0.92;
  s.d = 0.94;
  s.e_c_max = 50.0;
  s.e_d_max = 50.0;
  s.soc_max = 500.0;
  s.soc_prev = 500.0;
  m.storages[1] = s;

  PlantState state = initial_plant_state(m);
  CHECK(state.soc.at(1) == 500.0);
  AppliedControls controls;
  controls.e_c[1] = 50.0;
  controls.e_d[1] = 0.0;
  const auto res = step_plant(m, state, controls, {{1, 0.0}});
  CHECK(res.next.soc.at(1) == doctest::Approx(71.0));  // 0.05*500 + 0.92*50
  CHECK(res.warnings.empty());
}

TEST_CASE("step_plant without leakage or exchange keeps the state") {
  NetworkModel m;
  m.num_nodes = 1;
  m.horizon = 1;
  StorageParams s;
  s.eff = 0.0;
  s.c = 1.0;
  s.d = 1.0;
  s.e_c_max = 10.0;
  s.e_d_max = 10.0;
  s.soc_max = 100.0;
  s.soc_prev = 40.0;
  m.storages[1] = s;
  const auto res =
      step_plant(m, initial_plant_state(m), AppliedControls{}, {{1, 0.0}});
  CHECK(res.next.soc.at(1) == 40.0);
}

TEST_CASE("step_plant flags and clamps an out-of-range state") {
  NetworkModel m;
  m.num_nodes = 1;
  m.horizon = 1;
  StorageParams s;
  s.eff = 0.0;
  s.c = 1.0;
  s.d = 1.0;
  s.e_c_max = 100.0;
  s.e_d_max = 100.0;
  s.soc_max = 50.0;
  s.soc_prev = 40.0;
  m.storages[1] = s;
  AppliedControls controls;
  controls.e_c[1] = 100.0;  // overshoots the capacity
  const auto res = step_plant(m, initial_plant_state(m), controls, {{1, 0.0}});
  CHECK(res.soc_clamped);
  CHECK(res.next.soc.at(1) == 50.0);
  REQUIRE_FALSE(res.warnings.empty());
}

TEST_CASE("step_plant slack stays nonnegative when realized demand equals the margin") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  AdmmConfig config;
  config.rho = 0.5;
  config.max_iters = 100000;
  config.tol = 1e-8;  // the slack check needs balance feasibility below 1e-6
  const auto res = run_admm(problem, config);
  REQUIRE(res.converged);
  const auto controls = extract_controls(problem, res.x, 0);
  const auto tf = tighten_forecast(tc.forecast);
  std::map<int, double> realized = {{1, tf.d_tilde.at({1, 0})}, {2, tf.d_tilde.at({2, 0})}};
  const auto stepped = step_plant(tc.model, initial_plant_state(tc.model), controls, realized);
  for (const auto& [node, slack] : stepped.slack) CHECK(slack >= -1e-6);
}

TEST_CASE("sample_realized_demand with zero variance returns the mean") {
  ForecastSeries fs;
  fs.horizon = 1;
  fs.epsilon = 0.25;
  fs.demand_mean[{1, 0}] = 60.0;
  fs.demand_var[{1, 0}] = 0.0;
  const auto draw = sample_realized_demand(fs, 7, 0);
  CHECK(draw.at(1) == 60.0);
}

TEST_CASE("sample_realized_demand is reproducible per seed") {
  ForecastSeries fs;
  fs.horizon = 1;
  fs.epsilon = 0.25;
  fs.demand_mean[{1, 0}] = 60.0;
  fs.demand_var[{1, 0}] = 10.0;
  fs.demand_mean[{2, 0}] = 30.0;
  fs.demand_var[{2, 0}] = 5.0;
  const auto a = sample_realized_demand(fs, 11, 0);
  const auto b = sample_realized_demand(fs, 11, 0);
  CHECK(a.at(1) == b.at(1));
  CHECK(a.at(2) == b.at(2));
  const auto c = sample_realized_demand(fs, 12, 0);
  CHECK(a.at(1) != c.at(1));
}

TEST_CASE("sample_realized_demand concentrates around the mean") {
  ForecastSeries fs;
  fs.horizon = 1;
  fs.epsilon = 0.25;
  fs.demand_mean[{1, 0}] = 60.0;
  fs.demand_var[{1, 0}] = 10.0;
  double sum = 0.0;
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    sum += sample_realized_demand(fs, static_cast<std::uint64_t>(s), 0).at(1);
  }
  CHECK(std::abs(sum / draws - 60.0) < 0.2);
}

TEST_CASE("run_receding_horizon with one step equals a single solve plus a plant step") {
  const auto sc = tiny_scenario_with_rule();
  MpcConfig config;
  config.steps = 1;
  config.solver = MpcSolverKind::kAdmm;
  config.admm.rho = 0.5;
  config.admm.max_iters = 50000;
  config.realized_expectation = true;
  const auto provider = [&sc](int t0) { return sc.forecast_at(t0); };
  const auto log = run_receding_horizon(sc.model, provider, config);
  REQUIRE(log.completed);
  REQUIRE(log.steps.size() == 1);

  const auto problem = build_compact(sc.model, sc.forecast_at(0));
  AdmmConfig ac = config.admm;
  ac.record_trace = false;
  const auto direct = run_admm(problem, ac);
  const auto controls = extract_controls(problem, direct.x, 0);
  for (const auto& [e, v] : controls.flow) {
    CHECK(log.steps[0].applied.flow.at(e) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("run_receding_horizon with zero steps returns an empty log") {
  const auto sc = tiny_scenario_with_rule();
  MpcConfig config;
  config.steps = 0;
  const auto log =
      run_receding_horizon(sc.model, [&sc](int t0) { return sc.forecast_at(t0); }, config);
  CHECK(log.completed);
  CHECK(log.steps.empty());
}

TEST_CASE("closed loop over the rule keeps slack above the tightening margin") {
  const auto sc = tiny_scenario_with_rule();
  MpcConfig config;
  config.steps = 6;
  config.solver = MpcSolverKind::kAdmm;
  config.admm.rho = 0.5;
  config.admm.max_iters = 80000;
  config.admm.tol = 1e-7;
  config.realized_expectation = true;
  const auto log =
      run_receding_horizon(sc.model, [&sc](int t0) { return sc.forecast_at(t0); }, config);
  REQUIRE(log.completed);
  REQUIRE(log.steps.size() == 6);
  for (const auto& rec : log.steps) {
    for (const auto& [node, slack] : rec.slack) CHECK(slack >= -1e-6);
    CHECK_FALSE(rec.soc_clamped);
  }
}

TEST_CASE("run_receding_horizon is deterministic given the seed") {
  const auto sc = tiny_scenario_with_rule();
  MpcConfig config;
  config.steps = 3;
  config.solver = MpcSolverKind::kAdmm;
  config.admm.rho = 0.5;
  config.admm.max_iters = 80000;
  config.seed = 5;
  const auto provider = [&sc](int t0) { return sc.forecast_at(t0); };
  const auto a = run_receding_horizon(sc.model, provider, config);
  const auto b = run_receding_horizon(sc.model, provider, config);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t s = 0; s < a.steps.size(); ++s) {
    for (const auto& [node, value] : a.steps[s].realized) {
      CHECK(value == b.steps[s].realized.at(node));
    }
  }
}

TEST_CASE("mpc log CSV schema") {
  const auto sc = tiny_scenario_with_rule();
  MpcConfig config;
  config.steps = 1;
  config.admm.rho = 0.5;
  config.admm.max_iters = 50000;
  config.realized_expectation = true;
  const auto log =
      run_receding_horizon(sc.model, [&sc](int t0) { return sc.forecast_at(t0); }, config);
  const std::string path = "mpc_log_test.csv";
  write_mpc_csv(log, path);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f);
  char line[512];
  REQUIRE(std::fgets(line, sizeof line, f));
  CHECK(std::string(line) == "step,node,P,E_c,E_d,F_out,F_in,realized_demand,slack\n");
  int rows = 0;
  while (std::fgets(line, sizeof line, f)) ++rows;
  CHECK(rows == 2);  // one row per node per step
  std::fclose(f);
  std::remove(path.c_str());
}
