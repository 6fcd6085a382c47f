// Command-line front end: scenario validation, solver runs with trace
// output, solver comparison against the centralized reference, closed-loop
// receding-horizon simulation, and benchmark scenario generation.
//
// Exit codes: 0 ok, 2 parse/validation failure, 3 iteration budget
// exhausted, 4 mid-run failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gridmpc/harness.hpp"
#include "gridmpc/mpc.hpp"
#include "gridmpc/oracle.hpp"
#include "gridmpc/scenario.hpp"
#include "gridmpc/trace.hpp"

namespace {

using namespace gridmpc;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBudget = 3;
constexpr int kExitMidRun = 4;

struct SolveOptions {
  std::string scenario_path;
  std::string method = "dual";
  int k = 0;  // 0: keep the scenario horizon
  double rho = 0.01;
  double lipschitz = 0.0;
  double tol = 0.0;  // 0: solver default
  int max_iters = 0;
  std::string trace_path;
  std::string out_path;
  std::string reference_path;
  std::uint64_t seed = 42;
};

Scenario load_with_horizon(const std::string& path, int k) {
  Scenario sc = load_scenario(path);
  if (k > 0) sc.model.horizon = k;
  return sc;
}

int cmd_validate(const std::string& path) {
  const Scenario sc = load_scenario(path);
  const auto report = validate_network(sc.model);
  if (!report.ok()) {
    for (const auto& issue : report.issues) std::cerr << "validation: " << issue << "\n";
    return kExitValidation;
  }
  const auto problem = build_compact(sc.model, sc.forecast_at(0));
  const auto qp = assemble_global(problem);
  const auto probe = check_strict_feasibility(qp);
  if (!probe.strictly_feasible) {
    std::cerr << "Assumption 4 violated: no strictly feasible point (max tightened violation "
              << probe.max_violation << ")\n";
    return kExitValidation;
  }
  std::cout << "scenario ok: " << sc.model.num_nodes << " nodes, " << sc.model.edges.size()
            << " directed edges, K=" << sc.model.horizon << ", strictly feasible\n";
  return kExitOk;
}

int cmd_solve(const SolveOptions& opt) {
  const Scenario sc = load_with_horizon(opt.scenario_path, opt.k);
  const auto problem = build_compact(sc.model, sc.forecast_at(0));

  std::optional<Eigen::VectorXd> reference;
  if (!opt.reference_path.empty()) {
    reference = read_solution_json(problem, opt.reference_path);
  }

  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
  SolveTrace trace;
  if (opt.method == "dual") {
    DualAscentConfig config;
    if (opt.lipschitz > 0.0) config.lipschitz = opt.lipschitz;
    if (opt.max_iters > 0) config.max_iters = opt.max_iters;
    if (opt.tol > 0.0) config.tol_grad = opt.tol;
    if (reference) config.reference = &*reference;
    const auto res = run_dual_ascent(problem, config);
    x = res.x;
    converged = res.converged;
    iterations = res.iterations;
    trace = std::move(res.trace);
    std::cout << "dual ascent: L=" << res.lipschitz_used << " iters=" << iterations
              << (converged ? " converged" : " budget exhausted")
              << " infeas=" << res.final_infeas << "\n";
  } else if (opt.method == "admm") {
    AdmmConfig config;
    config.rho = opt.rho;
    if (opt.max_iters > 0) config.max_iters = opt.max_iters;
    if (opt.tol > 0.0) config.tol = opt.tol;
    if (reference) config.reference = &*reference;
    const auto res = run_admm(problem, config);
    x = res.x;
    converged = res.converged;
    iterations = res.iterations;
    trace = std::move(res.trace);
    std::cout << "admm: rho=" << config.rho << " iters=" << iterations
              << (converged ? " converged" : " budget exhausted") << " residuals=("
              << res.residuals.primal << ", " << res.residuals.consensus << ", "
              << res.residuals.dual << ")\n";
  } else {
    std::cerr << "unknown method '" << opt.method << "'\n";
    return kExitValidation;
  }

  const double cost = total_cost(problem, x);
  std::cout << "cost " << cost << "\n";
  if (!opt.trace_path.empty()) write_trace_csv(trace, opt.trace_path);
  if (!opt.out_path.empty()) {
    write_solution_json(problem, x, opt.method, converged, iterations, cost, opt.out_path);
  }
  return converged ? kExitOk : kExitBudget;
}

int cmd_compare(const std::string& path, int k) {
  const Scenario sc = load_with_horizon(path, k);
  const auto problem = build_compact(sc.model, sc.forecast_at(0));
  const auto qp = assemble_global(problem);

  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0).count();
  };

  auto t0 = clock::now();
  const auto ref = solve_reference(qp);
  const long ref_ms = ms_since(t0);
  const double x_scale = 1.0 + ref.x.lpNorm<Eigen::Infinity>();
  const double dist_tol = 1e-3 * x_scale;

  auto iters_to_tol = [&](const SolveTrace& trace) -> long {
    for (const auto& row : trace.rows) {
      if (row.dist_to_ref <= dist_tol) return row.iter + 1;
    }
    return -1;
  };

  DualAscentConfig dc;
  dc.reference = &ref.x;
  t0 = clock::now();
  const auto dual = run_dual_ascent(problem, dc);
  const long dual_ms = ms_since(t0);

  AdmmConfig ac;
  ac.reference = &ref.x;
  t0 = clock::now();
  const auto admm = run_admm(problem, ac);
  const long admm_ms = ms_since(t0);

  const long dual_to_tol = iters_to_tol(dual.trace);
  const long admm_to_tol = iters_to_tol(admm.trace);
  const double dual_dist = (dual.x - ref.x).lpNorm<Eigen::Infinity>();
  const double admm_dist = (admm.x - ref.x).lpNorm<Eigen::Infinity>();

  std::printf("%-12s %14s %12s %16s %14s\n", "method", "iters-to-1e-3", "wall-ms", "final-dist",
              "cost");
  std::printf("%-12s %14s %12ld %16.3e %14.6f\n", "reference", "-", ref_ms, 0.0, ref.cost);
  std::printf("%-12s %14ld %12ld %16.3e %14.6f\n", "dual", dual_to_tol, dual_ms, dual_dist,
              total_cost(problem, dual.x));
  std::printf("%-12s %14ld %12ld %16.3e %14.6f\n", "admm", admm_to_tol, admm_ms, admm_dist,
              total_cost(problem, admm.x));
  if (admm_to_tol > 0 && (dual_to_tol < 0 || admm_to_tol < dual_to_tol)) {
    std::printf("note: admm needed fewer iterations to reach the 1e-3 band\n");
  } else if (dual_to_tol > 0) {
    std::printf("note: dual ascent needed fewer iterations to reach the 1e-3 band\n");
  }
  return kExitOk;
}

int cmd_mpc(const std::string& path, int steps, const std::string& method, std::uint64_t seed,
            const std::string& realized, const std::string& out) {
  const Scenario sc = load_scenario(path);
  MpcConfig config;
  config.steps = steps >= 0 ? steps : sc.mpc_steps;
  config.solver = method == "dual" ? MpcSolverKind::kDualAscent : MpcSolverKind::kAdmm;
  config.seed = seed;
  config.realized_expectation = realized == "expectation";
  // closed-loop inner solves only need enough accuracy for the applied step
  config.dual.tol_grad = 1e-4;
  config.dual.tol_feas = 1e-4;
  config.admm.tol = 1e-5;

  const auto log = run_receding_horizon(
      sc.model, [&sc](int t0) { return sc.forecast_at(t0); }, config);
  if (!out.empty()) write_mpc_csv(log, out);
  std::cout << "mpc: " << log.steps.size() << " steps recorded\n";
  if (!log.completed) {
    std::cerr << "mpc halted: " << log.failure << "\n";
    return kExitMidRun;
  }
  return kExitOk;
}

int cmd_genscenario(std::uint64_t seed, int k, const std::string& out) {
  const Scenario sc = make_benchmark_scenario(seed, k);
  save_scenario(sc, out);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed MPC energy dispatch for interconnected microgrids"};
  app.require_subcommand(1);

  std::string scenario_path;
  auto* validate = app.add_subcommand("validate", "check a scenario and its feasibility");
  validate->add_option("scenario", scenario_path, "scenario JSON file")->required();

  SolveOptions solve_opt;
  auto* solve = app.add_subcommand("solve", "solve one horizon with a distributed method");
  solve->add_option("scenario", solve_opt.scenario_path, "scenario JSON file")->required();
  solve->add_option("--method", solve_opt.method, "dual | admm")
      ->check(CLI::IsMember({"dual", "admm"}));
  solve->add_option("--k", solve_opt.k, "override the horizon length");
  solve->add_option("--rho", solve_opt.rho, "ADMM penalty parameter");
  solve->add_option("--lipschitz", solve_opt.lipschitz,
                    "dual-ascent Lipschitz constant (default: computed bound)");
  solve->add_option("--tol", solve_opt.tol, "convergence tolerance");
  solve->add_option("--max-iters", solve_opt.max_iters, "iteration budget");
  solve->add_option("--trace", solve_opt.trace_path, "write per-iteration trace CSV");
  solve->add_option("--out", solve_opt.out_path, "write solution JSON");
  solve->add_option("--reference", solve_opt.reference_path,
                    "solution JSON; adds dist_to_ref to the trace");
  solve->add_option("--seed", solve_opt.seed, "seed (reserved for scenarios with line_seed)");

  std::string cmp_path;
  int cmp_k = 0;
  auto* compare = app.add_subcommand("compare", "run reference + both solvers and report");
  compare->add_option("scenario", cmp_path, "scenario JSON file")->required();
  compare->add_option("--k", cmp_k, "override the horizon length");

  std::string mpc_path, mpc_method = "admm", mpc_realized = "sample", mpc_out;
  int mpc_steps = -1;
  std::uint64_t mpc_seed = 0;
  auto* mpc = app.add_subcommand("mpc", "closed-loop receding-horizon run");
  mpc->add_option("scenario", mpc_path, "scenario JSON file")->required();
  mpc->add_option("--steps", mpc_steps, "number of plant steps");
  mpc->add_option("--method", mpc_method, "dual | admm")
      ->check(CLI::IsMember({"dual", "admm"}));
  mpc->add_option("--seed", mpc_seed, "seed for realized-demand draws");
  mpc->add_option("--realized", mpc_realized, "sample | expectation")
      ->check(CLI::IsMember({"sample", "expectation"}));
  mpc->add_option("--out", mpc_out, "write closed-loop log CSV");

  std::uint64_t gen_seed = 42;
  int gen_k = 3;
  std::string gen_out = "ieee30.json";
  auto* gen = app.add_subcommand("genscenario", "emit the 30-bus benchmark scenario");
  gen->add_option("--seed", gen_seed, "line-parameter seed");
  gen->add_option("--k", gen_k, "horizon length");
  gen->add_option("--out", gen_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(scenario_path);
    if (solve->parsed()) return cmd_solve(solve_opt);
    if (compare->parsed()) return cmd_compare(cmp_path, cmp_k);
    if (mpc->parsed())
      return cmd_mpc(mpc_path, mpc_steps, mpc_method, mpc_seed, mpc_realized, mpc_out);
    if (gen->parsed()) return cmd_genscenario(gen_seed, gen_k, gen_out);
  } catch (const ScenarioParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const InfeasibleProblem& e) {
    std::cerr << "Assumption 4 violated: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMidRun;
  }
  return kExitOk;
}
