#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <utility>

#include "gridmpc/problem_builder.hpp"
#include "gridmpc/trace.hpp"

// Proximal ADMM on the consensus reformulation: every agent keeps copies of
// the neighbor flows entering its balance rows, slack variables turn the
// inequalities into equalities, and copies are reconciled by averaging the
// two sides' shifted estimates. Update order per iteration is strictly
// v -> u -> multipliers.

namespace gridmpc {

struct NotSpdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Direct dense solve of a symmetric positive-definite system, with
// iterative refinement to ||G u - rhs||_inf <= 1e-10 (1 + ||rhs||_inf).
// Throws NotSpdError when the factorization hits a non-positive pivot.
Eigen::VectorXd spd_solve(const Eigen::MatrixXd& G, const Eigen::VectorXd& rhs);

// Fixed per-agent data: constraint matrix M = [[-A, 0], [-B_self, 1 (x) I_K]]
// acting on u = [x | copies], selectors, and the cached factorization of the
// u-update normal matrix.
struct AdmmLocal {
  int node = 0;
  int K = 1;
  int n = 0;      // x dimension
  int m = 0;      // local inequality rows
  int u_dim = 0;  // n + K * deg
  std::vector<int> nbrs;

  SpMat M;                   // (m+K) x u_dim
  Eigen::VectorXd m_vec;     // m+K, equals [-a; -b]
  std::map<int, SpMat> S;    // j -> K x u_dim, selects the copy of F_ji
  std::map<int, SpMat> R;    // j -> K x u_dim, selects own F_ij
  SpMat P_sel;               // n x u_dim, recovers x
  Eigen::VectorXd quad_ext;  // u_dim, zero on copy coordinates
  Eigen::VectorXd lin_ext;

  double rho = 0.0;
  Eigen::MatrixXd G;  // quad + rho (M^T M + sum_j S^T S + R^T R)
  Eigen::LLT<Eigen::MatrixXd> llt;

  int copy_offset(int nbr_pos) const { return n + nbr_pos * K; }
};

// Builds all agents' fixed data for penalty rho and factorizes the u-update
// systems. Throws NotSpdError if any system is not positive-definite.
std::map<int, AdmmLocal> build_admm_locals(const CompactProblem& problem, double rho);

struct AdmmIterate {
  std::map<int, Eigen::VectorXd> u;               // node -> u_dim
  std::map<int, Eigen::VectorXd> v;               // node -> m+K, >= 0
  std::map<Edge, Eigen::VectorXd> v1, v2;         // (i,j) -> K
  std::map<int, Eigen::VectorXd> mu;              // node -> m+K
  std::map<Edge, Eigen::VectorXd> mu1, mu2;       // (i,j) -> K
  int iter = 0;
};

AdmmIterate zero_admm_iterate(const CompactProblem& problem);

struct AdmmConfig {
  double rho = 0.01;
  int max_iters = 20000;
  double tol = 1e-6;  // on all three residual families
  const Eigen::VectorXd* reference = nullptr;
  const AdmmIterate* warm_start = nullptr;
  bool record_trace = true;
};

struct AdmmResiduals {
  double primal = 0.0;     // max_i ||M u_i - m - v_i||_inf
  double consensus = 0.0;  // max over edges of ||S u - v1|| and ||R u - v2||
  double dual = 0.0;       // rho * max change in the v variables
  bool all_below(double tol) const { return primal <= tol && consensus <= tol && dual <= tol; }
};

struct AdmmResult {
  Eigen::VectorXd x;
  AdmmIterate iterate;
  AdmmResiduals residuals;
  bool converged = false;
  int iterations = 0;
  SolveTrace trace;
};

// (26a): v_i = [M u_i - m - mu_i / rho]_+ .
Eigen::VectorXd v_local_update(const AdmmLocal& loc, const Eigen::VectorXd& u_i,
                               const Eigen::VectorXd& mu_i, double rho);

// Shifted estimates exchanged for the consensus updates (26b)-(26c).
Eigen::VectorXd consensus_s_shift(const AdmmLocal& loc, int j, const Eigen::VectorXd& u_i,
                                  const Eigen::VectorXd& mu1_ij, double rho);
Eigen::VectorXd consensus_r_shift(const AdmmLocal& loc, int j, const Eigen::VectorXd& u_i,
                                  const Eigen::VectorXd& mu2_ij, double rho);
inline Eigen::VectorXd consensus_average(const Eigen::VectorXd& s_shift,
                                         const Eigen::VectorXd& r_shift) {
  return 0.5 * (s_shift + r_shift);
}

// (26b): both halves of the consensus pair; they are equal by construction.
std::pair<Eigen::VectorXd, Eigen::VectorXd> v_consensus_update(
    const AdmmLocal& loc_i, const AdmmLocal& loc_j, const Eigen::VectorXd& u_i,
    const Eigen::VectorXd& u_j, const Eigen::VectorXd& mu1_ij, const Eigen::VectorXd& mu2_ji,
    double rho);

// (26d): proximal quadratic solve for agent i. v1_by_nbr/v2_by_nbr and the
// multiplier maps are aligned with loc.nbrs (ascending).
Eigen::VectorXd u_update(const AdmmLocal& loc, const Eigen::VectorXd& v_i,
                         const std::vector<const Eigen::VectorXd*>& v1_by_nbr,
                         const std::vector<const Eigen::VectorXd*>& v2_by_nbr,
                         const Eigen::VectorXd& mu_i,
                         const std::vector<const Eigen::VectorXd*>& mu1_by_nbr,
                         const std::vector<const Eigen::VectorXd*>& mu2_by_nbr, double rho);

// (26e)-(26g); returns the residuals it used so callers can aggregate them.
struct MultiplierUpdate {
  Eigen::VectorXd r_local;                 // M u - m - v
  std::map<int, Eigen::VectorXd> r1, r2;   // per neighbor
};
MultiplierUpdate multiplier_update(const AdmmLocal& loc, const Eigen::VectorXd& u_i,
                                   const Eigen::VectorXd& v_i,
                                   const std::vector<const Eigen::VectorXd*>& v1_by_nbr,
                                   const std::vector<const Eigen::VectorXd*>& v2_by_nbr,
                                   Eigen::VectorXd& mu_i,
                                   std::vector<Eigen::VectorXd*>& mu1_by_nbr,
                                   std::vector<Eigen::VectorXd*>& mu2_by_nbr, double rho);

// Residual families of an iterate (v-change supplied by the caller).
AdmmResiduals residuals(const std::map<int, AdmmLocal>& locals, const AdmmIterate& it,
                        double v_change, double rho);

Eigen::VectorXd extract_x(const AdmmLocal& loc, const Eigen::VectorXd& u_i);

Eigen::VectorXd stack_x_from_u(const CompactProblem& problem,
                               const std::map<int, AdmmLocal>& locals, const AdmmIterate& it);

// One full iteration (26a)-(26g) given the shifted consensus estimates of
// every directed edge. Shared by the solver loop and the message-passing
// harness; both perform identical arithmetic in identical order.
struct AdmmIterationOutcome {
  AdmmResiduals residuals;
  bool stop = false;
};
AdmmIterationOutcome admm_iteration_body(const CompactProblem& problem,
                                         const std::map<int, AdmmLocal>& locals, AdmmIterate& it,
                                         const std::map<Edge, Eigen::VectorXd>& s_shift,
                                         const std::map<Edge, Eigen::VectorXd>& r_shift,
                                         const AdmmConfig& config, SolveTrace* trace, int s);

AdmmResult run_admm(const CompactProblem& problem, const AdmmConfig& config);

}  // namespace gridmpc
