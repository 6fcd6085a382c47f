#pragma once

#include <cstdint>
#include <map>

#include "gridmpc/admm.hpp"
#include "gridmpc/dual_ascent.hpp"
#include "gridmpc/network_model.hpp"
#include "gridmpc/oracle.hpp"
#include "gridmpc/problem_builder.hpp"

namespace gridmpc::testing {

// Two nodes, K=1: node 1 carries a generator (alpha=2, omega=0, cap 100,
// starting from 0 with ramp 100) and feeds node 2, which only consumes
// (tightened demand 10). Line caps 20 both ways, strictly increasing flow
// costs. Optimum: P1=10, F12=10, F21=0.
struct TinyCase {
  NetworkModel model;
  ForecastSeries forecast;
};
TinyCase tiny_case();

// Random connected instances used by property tests. Built so that a
// strictly feasible point always exists: node 1 carries a large generator,
// demands are small against line capacities.
NetworkModel random_model(std::uint64_t seed, int max_nodes = 5, int max_k = 3);
ForecastSeries random_forecast(const NetworkModel& model, std::uint64_t seed);

// Central finite differences of the dual function, the independent oracle
// for the analytic gradient.
struct FdDualGradient {
  std::map<int, Eigen::VectorXd> g_lambda;
  std::map<int, Eigen::VectorXd> g_zeta;
};
FdDualGradient fd_dual_gradient(const CompactProblem& problem,
                                const std::map<int, Eigen::VectorXd>& lambda,
                                const std::map<int, Eigen::VectorXd>& zeta, double delta);

// Fixed-point ADMM state assembled from the reference solution and its
// duals, used by the warm-start tests.
AdmmIterate admm_warm_start_from_reference(const CompactProblem& problem,
                                           const std::map<int, AdmmLocal>& locals,
                                           const ReferenceSolution& ref);

// Literal evaluation of the raw constraint families (generation range and
// ramps, storage rates and state bounds, flow caps, tightened balance) at a
// stacked point; margin is the smallest signed slack over all constraints.
struct RawCheck {
  bool holds = false;
  double margin = 0.0;
};
RawCheck raw_constraints_hold(const NetworkModel& model, const TightenedForecast& tf,
                              const CompactProblem& problem, const Eigen::VectorXd& x);

// Smallest signed slack of the stacked system h - Hx (negative: violated).
double stacked_margin(const StackedConstraints& sc, const Eigen::VectorXd& x);

}  // namespace gridmpc::testing
