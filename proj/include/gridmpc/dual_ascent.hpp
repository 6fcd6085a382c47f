#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "gridmpc/problem_builder.hpp"
#include "gridmpc/trace.hpp"

// Gradient-projection ascent on the Lagrangian dual of the compact problem.
// One iteration: every agent minimizes its local Lagrangian in closed form,
// then all dual blocks take a projected gradient step of size 1/L
// simultaneously. The per-agent kernels below are also driven by the
// message-passing harness; both paths perform identical arithmetic in
// identical order (neighbors always processed ascending).

namespace gridmpc {

struct DualIterate {
  std::map<int, Eigen::VectorXd> lambda;  // node -> m_i, >= 0
  std::map<int, Eigen::VectorXd> zeta;    // node -> K, >= 0
  std::map<int, Eigen::VectorXd> x_star;  // node -> n_i, minimizers for (lambda, zeta)
  int iter = 0;
};

struct DualAscentConfig {
  double lipschitz = 0.0;  // step is 1/lipschitz; <= 0 means "compute the bound"
  int max_iters = 50000;
  double tol_grad = 1e-6;  // on ||eta(s+1)-eta(s)||_inf * L
  double tol_feas = 1e-5;  // on the positive part of all constraint residuals
  const Eigen::VectorXd* reference = nullptr;  // enables dist_to_ref in the trace
  const DualIterate* warm_start = nullptr;
  bool record_trace = true;
};

struct DualAscentResult {
  Eigen::VectorXd x;  // stacked recovered primal
  DualIterate iterate;
  bool converged = false;
  int iterations = 0;
  double lipschitz_used = 0.0;
  // max over s of Psi(s) - Psi(s+1); <= 0 means perfectly monotone ascent
  double max_ascent_violation = 0.0;
  double final_infeas = 0.0;
  SolveTrace trace;
};

DualIterate zero_dual_iterate(const CompactProblem& problem);

// A^T lambda + B_self^T zeta_i + sum_j B_out[j]^T zeta_j, neighbors ascending.
Eigen::VectorXd dual_linear_term(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                 const Eigen::VectorXd& zeta_i,
                                 const std::vector<const Eigen::VectorXd*>& zeta_nbrs);

// Coordinatewise closed-form minimizer x_r = -(lin_r + c_r)/quad_r.
// Throws std::domain_error on a non-positive quadratic coefficient.
Eigen::VectorXd local_primal_argmin(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                    const Eigen::VectorXd& zeta_i,
                                    const std::vector<const Eigen::VectorXd*>& zeta_nbrs);
Eigen::VectorXd local_primal_argmin(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                    const Eigen::VectorXd& zeta_i,
                                    const std::map<int, Eigen::VectorXd>& zeta_all);

// B_out[to] * x_i: the (negated) flow series agent i contributes to the
// balance rows of neighbor `to`.
Eigen::VectorXd flow_contribution(const LocalProblem& lp, int to, const Eigen::VectorXd& x_i);

// Gradient blocks of the dual function at exact local minimizers:
// d/d lambda_i = A x_i - a, d/d zeta_i = B_self x_i + sum_j B_ji x_j - b.
Eigen::VectorXd lambda_gradient(const LocalProblem& lp, const Eigen::VectorXd& x_i);
Eigen::VectorXd zeta_gradient(const LocalProblem& lp, const Eigen::VectorXd& x_i,
                              const std::vector<const Eigen::VectorXd*>& flow_contribs);

struct DualGradient {
  std::map<int, Eigen::VectorXd> g_lambda;
  std::map<int, Eigen::VectorXd> g_zeta;
  double max_positive_part() const;
};
DualGradient dual_gradient(const CompactProblem& problem,
                           const std::map<int, Eigen::VectorXd>& x_star);

// Psi(eta) evaluated from scratch (recomputes the local minimizers).
double dual_value(const CompactProblem& problem, const std::map<int, Eigen::VectorXd>& lambda,
                  const std::map<int, Eigen::VectorXd>& zeta);
// Psi(eta) reusing minimizers already computed for these duals.
double dual_value_at(const CompactProblem& problem, const std::map<int, Eigen::VectorXd>& lambda,
                     const std::map<int, Eigen::VectorXd>& zeta,
                     const std::map<int, Eigen::VectorXd>& x_star);

// One synchronous projected step (22b)-(22c) for all agents; x_star is left
// untouched and belongs to the pre-step duals.
DualIterate dual_step(const CompactProblem& problem, const DualIterate& it, double step);

// rho_max(H)^2 / sigma_min for the stacked constraint matrix H; an upper
// bound on the Lipschitz constant of the dual gradient. rho_max is computed
// by power iteration on H^T H.
double lipschitz_bound(const CompactProblem& problem);

Eigen::VectorXd stack_x(const CompactProblem& problem,
                        const std::map<int, Eigen::VectorXd>& x_by_node);

DualAscentResult run_dual_ascent(const CompactProblem& problem, const DualAscentConfig& config);

// Everything one iteration does after the gradients are in hand: trace row,
// simultaneous projected dual update, stopping test. Shared by the solver
// loop and the message-passing harness so that both perform identical
// arithmetic. Returns true when the stopping rule fired.
struct DualIterationTail {
  double psi = 0.0;
  double infeas = 0.0;
  double max_delta = 0.0;
  bool stop = false;
};
DualIterationTail dual_iteration_tail(const CompactProblem& problem, DualIterate& it,
                                      const DualGradient& g, double lipschitz,
                                      const DualAscentConfig& config, SolveTrace* trace, int s);

}  // namespace gridmpc
