#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridmpc/problem_builder.hpp"

// Ground truth for the distributed solvers: the stacked QP, a high-accuracy
// reference solution (accelerated projected gradient on the dual, with
// adaptive restart), a brute-force enumerator for tiny instances, and
// optimality-structure checks.

namespace gridmpc {

struct InfeasibleProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// min sum_r quad_r/2 x_r^2 + lin_r x_r  s.t.  H x <= h.
struct GlobalQP {
  StackedConstraints stacked;
  Eigen::VectorXd quad;  // diagonal Hessian, > 0
  Eigen::VectorXd lin;
  int n = 0;
  int K = 1;
  std::vector<int> nodes;
  std::map<int, int> x_offset;
  std::map<int, int> m_by_node;

  double cost(const Eigen::VectorXd& x) const;
  // minimizer of the Lagrangian for dual vector eta (row-aligned with H)
  Eigen::VectorXd x_of_eta(const Eigen::VectorXd& eta) const;
};

GlobalQP assemble_global(const CompactProblem& problem);

struct KktResiduals {
  double stationarity = 0.0;   // ||quad x + lin + H^T eta||_inf / (1+||lin||_inf)
  double primal_feas = 0.0;    // max_r (Hx-h)_r^+ / (1+|h_r|)
  double dual_nonneg = 0.0;    // max_r (-eta_r)^+
  double comp_slack = 0.0;     // max_r |eta_r (Hx-h)_r| / (1+|cost|)
  double max() const;
};
KktResiduals kkt_residuals(const GlobalQP& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& eta);

struct ReferenceSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eta;  // stacked duals, row-aligned with H
  std::map<int, Eigen::VectorXd> lambda;  // per-node local-row duals
  std::map<int, Eigen::VectorXd> zeta;    // per-node coupling-row duals
  double cost = 0.0;
  double dual_value = 0.0;
  KktResiduals kkt;
  int iterations = 0;
  bool converged = false;
};

// FISTA on the dual with gradient-based adaptive restart, run until all
// scaled KKT residuals are <= tol. Throws InfeasibleProblem when the
// instance has no strictly feasible point (diverging duals / positive
// phase-1 residual).
ReferenceSolution solve_reference(const GlobalQP& qp, double tol = 1e-9, int max_iters = 2000000);

// Strict-feasibility probe: minimizes ||(Hx - h + margin)_+||^2; a zero
// minimum exhibits a point satisfying every row with slack >= margin.
struct FeasibilityProbe {
  bool strictly_feasible = false;
  double max_violation = 0.0;  // against the margin-tightened rows
  Eigen::VectorXd witness;
};
FeasibilityProbe check_strict_feasibility(const GlobalQP& qp, double margin_rel = 1e-6);

// Grid search with progressive zoom over the feasible box, then local
// refinement. Requires n <= 6 and box rows on every coordinate.
Eigen::VectorXd enumerate_tiny(const GlobalQP& qp, double grid_step);

// Lemma-1 structure at a candidate optimum: opposing flows and simultaneous
// charge/discharge must vanish within tol (scaled by the bound products).
struct ComplementarityReport {
  std::vector<std::string> violations;
  double max_flow_ratio = 0.0;     // max F_ij F_ji / (f_max_ij f_max_ji)
  double max_storage_ratio = 0.0;  // max E_c E_d / (e_c_max e_d_max)
  bool ok() const { return violations.empty(); }
};
ComplementarityReport complementarity_check(const NetworkModel& model,
                                            const CompactProblem& problem,
                                            const Eigen::VectorXd& x, double tol);

// max_r |eta_r * (Hx - h)_r|, the unscaled complementary-slackness residual.
double complementary_slackness(const GlobalQP& qp, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& eta);

}  // namespace gridmpc
