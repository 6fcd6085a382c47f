#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gridmpc/network_model.hpp"

// Converts a NetworkModel + ForecastSeries into per-agent tightened bounds,
// local constraint blocks, coupling matrices and quadratic cost vectors.
//
// Per-agent variable layout (dimension n_i):
//   [ P(0..K-1) | E_c(0..K-1) | E_d(0..K-1) | F block ]
// where the P block is present only for generator nodes, the E blocks only
// for storage nodes, and the F block is time-major: index = f_offset +
// k*|nbrs| + pos(j) with neighbors sorted ascending.

namespace gridmpc {

using SpMat = Eigen::SparseMatrix<double>;

struct TightenedForecast {
  std::map<std::pair<int, int>, double> d_tilde;  // (node, k)
  std::map<std::pair<int, int>, double> p_tilde;  // (generator node, k)
  std::vector<std::string> warnings;              // capacity clamps
};

// D~ = E[D] + sqrt((1-eps)/eps) * Var[D], per (node, k).
std::map<std::pair<int, int>, double> tighten_demand(const ForecastSeries& forecast);

// P~ = E[Pbar] - sqrt((1-eps)/eps) * Var[Pbar], clamped below at 0.
// A clamp makes the generation range degenerate; each one is reported.
std::map<std::pair<int, int>, double> tighten_capacity(const ForecastSeries& forecast,
                                                       std::vector<std::string>* warnings = nullptr);

TightenedForecast tighten_forecast(const ForecastSeries& forecast);

// One agent of the compact problem: local rows A x <= a, coupling rows
// B_self x + sum_j B_out[j] x_j <= b, and separable quadratic cost
// sum_r quad_r/2 x_r^2 + lin_r x_r.
struct LocalProblem {
  int node = 0;
  int K = 1;
  bool has_gen = false;
  bool has_store = false;
  std::vector<int> nbrs;  // ascending

  int n = 0;  // primal dimension
  int m = 0;  // local inequality rows

  SpMat A;                      // m x n
  Eigen::VectorXd a;            // m
  SpMat B_self;                 // K x n
  std::map<int, SpMat> B_out;   // j -> K x n, selects -F_ij series
  Eigen::VectorXd b;            // K, equal to -D~ series

  Eigen::VectorXd cost_quad;    // n, strictly positive
  Eigen::VectorXd cost_lin;     // n

  // layout
  int num_nbrs() const { return static_cast<int>(nbrs.size()); }
  int p_offset() const { return 0; }
  int ec_offset() const { return has_gen ? K : 0; }
  int ed_offset() const { return ec_offset() + (has_store ? K : 0); }
  int f_offset() const { return (has_gen ? K : 0) + (has_store ? 2 * K : 0); }
  int p_index(int k) const { return p_offset() + k; }
  int ec_index(int k) const { return ec_offset() + k; }
  int ed_index(int k) const { return ed_offset() + k; }
  int f_index(int k, int nbr_pos) const { return f_offset() + k * num_nbrs() + nbr_pos; }
  int nbr_pos(int j) const;  // throws on non-neighbor
};

struct CompactProblem {
  std::map<int, LocalProblem> locals;
  std::vector<int> nodes;        // ascending node ids
  std::map<int, int> x_offset;   // node -> offset into the stacked vector
  int total_n = 0;
  double sigma_min = 0.0;  // min over all coordinates of cost_quad
  double l_max = 0.0;      // max over all coordinates of cost_quad
  int K = 1;

  const LocalProblem& local(int i) const { return locals.at(i); }
};

// Generator block: 4K-2 rows over the K-column P block. Row order: K upper
// bounds, K lower bounds, K-1 ramp-up differences, K-1 ramp-down
// differences. The step-0 ramp constraints are folded into the box bounds:
// a[0] = min{P~_0, p_prev + ramp_hi}, lower-bound entry
// a[K] = -max{0, p_prev + ramp_lo}.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_generator_block(
    const GeneratorParams& g, int K, const std::vector<double>& p_tilde_row);

// Storage block: 6K rows over [E_c | E_d]. Row order: 2K rate upper bounds,
// 2K rate lower bounds, K state-of-charge upper rows, K state-of-charge
// lower rows. State rows are diagonal with cumulative gain
// g_kappa = sum_{m=0}^{kappa-1}(1-eff)^m on (c E_c, -d E_d); bounds carry
// (1-eff)^kappa * soc_prev.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_storage_block(const StorageParams& s, int K);

// Flow block: [+I; -I] of size 2K|nbrs| x K|nbrs|; upper bounds repeat the
// per-neighbor f_max pattern each step, lower half is zero.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_flow_block(
    const std::vector<LineParams>& lines_by_nbr, int K);

// Coupling block for agent i: B_self x = col{-P(k) + E_c(k) - E_d(k) +
// sum_j F_ij(k)}, B_out[j] row k = -1 at the F_ij(k) column, b = -D~ series,
// so that B_self x_i + sum_j B_ji x_j <= b_i is the tightened balance.
struct CouplingBlock {
  SpMat B_self;
  std::map<int, SpMat> B_out;
  Eigen::VectorXd b;
};
CouplingBlock assemble_coupling(const NetworkModel& model,
                                const std::map<std::pair<int, int>, double>& d_tilde, int i, int K);

// Full build. Throws std::invalid_argument on an invalid model and
// std::out_of_range on an incomplete forecast.
CompactProblem build_compact(const NetworkModel& model, const ForecastSeries& forecast);

double cost_eval(const LocalProblem& lp, const Eigen::VectorXd& x);
Eigen::VectorXd cost_grad(const LocalProblem& lp, const Eigen::VectorXd& x);

// Total cost of a stacked decision vector (ascending-node layout).
double total_cost(const CompactProblem& problem, const Eigen::VectorXd& x);

// Stacked inequality system H x <= h: block-diagonal local rows for every
// agent first, then one K-row coupling block per agent, both in ascending
// node order.
struct StackedConstraints {
  SpMat H;
  Eigen::VectorXd h;
  std::map<int, int> local_row;     // node -> first local row
  std::map<int, int> coupling_row;  // node -> first coupling row
  int rows = 0;
};
StackedConstraints stack_constraints(const CompactProblem& problem);

// Per-node first-step (or step-k) controls extracted from a stacked vector.
struct AppliedControls {
  std::map<int, double> p;    // generator nodes
  std::map<int, double> e_c;  // storage nodes
  std::map<int, double> e_d;
  std::map<Edge, double> flow;
};
AppliedControls extract_controls(const CompactProblem& problem, const Eigen::VectorXd& x, int k);

}  // namespace gridmpc
