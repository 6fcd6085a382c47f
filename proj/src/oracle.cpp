#include "gridmpc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gridmpc {

namespace {

// largest eigenvalue of v -> H diag(1/quad) H^T v by power iteration
double dual_hessian_norm(const SpMat& H, const Eigen::VectorXd& quad) {
  const int m = static_cast<int>(H.rows());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m) / std::sqrt(static_cast<double>(m));
  double lam = 0.0;
  for (int s = 0; s < 10000; ++s) {
    Eigen::VectorXd w = H.transpose() * v;
    w.array() /= quad.array();
    Eigen::VectorXd u = H * w;
    const double lam_new = v.dot(u);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    v = u / norm;
    if (s > 2 && std::abs(lam_new - lam) <= 1e-13 * std::max(1.0, lam_new)) return lam_new;
    lam = lam_new;
  }
  return lam;
}

double spectral_norm_sq(const SpMat& H) {
  const int n = static_cast<int>(H.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double lam = 0.0;
  for (int s = 0; s < 10000; ++s) {
    Eigen::VectorXd u = H.transpose() * (H * v).eval();
    const double lam_new = v.dot(u);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    v = u / norm;
    if (s > 2 && std::abs(lam_new - lam) <= 1e-13 * std::max(1.0, lam_new)) return lam_new;
    lam = lam_new;
  }
  return lam;
}

}  // namespace

double GlobalQP::cost(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(quad.cwiseProduct(x)) + lin.dot(x);
}

Eigen::VectorXd GlobalQP::x_of_eta(const Eigen::VectorXd& eta) const {
  Eigen::VectorXd g = lin + stacked.H.transpose() * eta;
  return (-g.array() / quad.array()).matrix();
}

GlobalQP assemble_global(const CompactProblem& problem) {
  GlobalQP qp;
  qp.stacked = stack_constraints(problem);
  qp.n = problem.total_n;
  qp.K = problem.K;
  qp.nodes = problem.nodes;
  qp.x_offset = problem.x_offset;
  qp.quad = Eigen::VectorXd::Zero(qp.n);
  qp.lin = Eigen::VectorXd::Zero(qp.n);
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    qp.quad.segment(problem.x_offset.at(i), lp.n) = lp.cost_quad;
    qp.lin.segment(problem.x_offset.at(i), lp.n) = lp.cost_lin;
    qp.m_by_node[i] = lp.m;
  }
  if (qp.n > 0 && !(qp.quad.minCoeff() > 0.0)) {
    throw std::invalid_argument("assemble_global: cost Hessian must be positive");
  }
  return qp;
}

double KktResiduals::max() const {
  return std::max(std::max(stationarity, primal_feas), std::max(dual_nonneg, comp_slack));
}

KktResiduals kkt_residuals(const GlobalQP& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& eta) {
  KktResiduals res;
  const Eigen::VectorXd stat = qp.quad.cwiseProduct(x) + qp.lin + qp.stacked.H.transpose() * eta;
  res.stationarity = stat.lpNorm<Eigen::Infinity>() / (1.0 + qp.lin.lpNorm<Eigen::Infinity>());
  const Eigen::VectorXd resid = qp.stacked.H * x - qp.stacked.h;
  double feas = 0.0, comp = 0.0;
  for (int r = 0; r < resid.size(); ++r) {
    feas = std::max(feas, std::max(resid(r), 0.0) / (1.0 + std::abs(qp.stacked.h(r))));
    comp = std::max(comp, std::abs(eta(r) * resid(r)));
  }
  res.primal_feas = feas;
  res.comp_slack = comp / (1.0 + std::abs(qp.cost(x)));
  res.dual_nonneg = std::max(0.0, -eta.minCoeff());
  return res;
}

double complementary_slackness(const GlobalQP& qp, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& eta) {
  const Eigen::VectorXd resid = qp.stacked.H * x - qp.stacked.h;
  return eta.cwiseProduct(resid).cwiseAbs().maxCoeff();
}

ReferenceSolution solve_reference(const GlobalQP& qp, double tol, int max_iters) {
  const SpMat& H = qp.stacked.H;
  const Eigen::VectorXd& h = qp.stacked.h;
  const int m = static_cast<int>(H.rows());

  double L = dual_hessian_norm(H, qp.quad) * (1.0 + 1e-9);
  if (L <= 0.0) L = 1.0;
  const double step = 1.0 / L;

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = eta;
  double t_momentum = 1.0;

  ReferenceSolution sol;
  const double eta_blowup = 1e12 * (1.0 + h.lpNorm<Eigen::Infinity>());

  int s = 0;
  for (; s < max_iters; ++s) {
    const Eigen::VectorXd x = qp.x_of_eta(y);
    const Eigen::VectorXd grad = H * x - h;  // ascent direction at y
    Eigen::VectorXd eta_next = (y + step * grad).cwiseMax(0.0);

    // gradient-based adaptive restart
    const Eigen::VectorXd diff = eta_next - eta;
    if (grad.dot(diff) < 0.0) {
      t_momentum = 1.0;
      y = eta;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
    y = eta_next + ((t_momentum - 1.0) / t_next) * diff;
    eta = eta_next;
    t_momentum = t_next;

    if (s % 10 == 0 || s == max_iters - 1) {
      const KktResiduals kkt = kkt_residuals(qp, qp.x_of_eta(eta), eta);
      if (kkt.max() <= tol) {
        sol.converged = true;
        ++s;
        break;
      }
      if (eta.lpNorm<Eigen::Infinity>() > eta_blowup) break;
    }
  }
  sol.iterations = s;
  sol.eta = eta;
  sol.x = qp.x_of_eta(eta);
  sol.kkt = kkt_residuals(qp, sol.x, eta);
  sol.cost = qp.cost(sol.x);
  // Psi(eta) = cost(x*(eta)) + eta^T (H x*(eta) - h)
  sol.dual_value = sol.cost + eta.dot(qp.stacked.H * sol.x - qp.stacked.h);

  if (!sol.converged) {
    const auto probe = check_strict_feasibility(qp);
    if (!probe.strictly_feasible) {
      std::ostringstream os;
      os << "no strictly feasible point found (max tightened violation " << probe.max_violation
         << "); Assumption 4 violated";
      throw InfeasibleProblem(os.str());
    }
    return sol;  // feasible but not converged within budget
  }

  for (int i : qp.nodes) {
    sol.lambda[i] = eta.segment(qp.stacked.local_row.at(i), qp.m_by_node.at(i));
    sol.zeta[i] = eta.segment(qp.stacked.coupling_row.at(i), qp.K);
  }
  return sol;
}

FeasibilityProbe check_strict_feasibility(const GlobalQP& qp, double margin_rel) {
  const SpMat& H = qp.stacked.H;
  const double margin = margin_rel * (1.0 + qp.stacked.h.lpNorm<Eigen::Infinity>());
  const Eigen::VectorXd h_tight = qp.stacked.h.array() - margin;

  double L = spectral_norm_sq(H) * (1.0 + 1e-9);
  if (L <= 0.0) L = 1.0;
  const double step = 1.0 / L;

  // FISTA on f(x) = 1/2 || (Hx - h_tight)_+ ||^2
  Eigen::VectorXd x = Eigen::VectorXd::Zero(qp.n);
  Eigen::VectorXd y = x;
  double t_momentum = 1.0;
  FeasibilityProbe probe;
  for (int s = 0; s < 200000; ++s) {
    const Eigen::VectorXd viol = (H * y - h_tight).cwiseMax(0.0);
    if ((H * x - h_tight).maxCoeff() <= 0.0) break;
    const Eigen::VectorXd grad = H.transpose() * viol;
    Eigen::VectorXd x_next = y - step * grad;
    const Eigen::VectorXd diff = x_next - x;
    if (grad.dot(diff) > 0.0) {
      t_momentum = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
    y = x_next + ((t_momentum - 1.0) / t_next) * diff;
    x = x_next;
    t_momentum = t_next;
  }
  probe.witness = x;
  probe.max_violation = (H * x - h_tight).maxCoeff();
  probe.strictly_feasible = probe.max_violation <= 0.0;
  return probe;
}

Eigen::VectorXd enumerate_tiny(const GlobalQP& qp, double grid_step) {
  if (qp.n > 6) throw std::invalid_argument("enumerate_tiny: dimension too large (n > 6)");
  if (!(grid_step > 0.0)) throw std::invalid_argument("enumerate_tiny: grid_step must be > 0");
  const SpMat& H = qp.stacked.H;
  const Eigen::VectorXd& h = qp.stacked.h;
  const int n = qp.n;

  // read the feasible box off the singleton rows
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::MatrixXd Hd(H);
  for (int r = 0; r < Hd.rows(); ++r) {
    int nz = 0, col = -1;
    for (int c = 0; c < n; ++c) {
      if (Hd(r, c) != 0.0) {
        ++nz;
        col = c;
      }
    }
    if (nz != 1) continue;
    const double coeff = Hd(r, col);
    if (coeff > 0.0) hi(col) = std::min(hi(col), h(r) / coeff);
    else lo(col) = std::max(lo(col), h(r) / coeff);
  }
  for (int c = 0; c < n; ++c) {
    if (!std::isfinite(lo(c)) || !std::isfinite(hi(c)) || lo(c) > hi(c)) {
      throw std::invalid_argument("enumerate_tiny: variable box is unbounded or empty");
    }
  }

  const double feas_tol = 1e-9 * (1.0 + h.lpNorm<Eigen::Infinity>());
  auto feasible = [&](const Eigen::VectorXd& x) {
    return ((Hd * x - h).array() <= feas_tol).all();
  };

  const int points = 13;  // grid points per axis and level
  Eigen::VectorXd box_lo = lo, box_hi = hi;
  Eigen::VectorXd best;
  double best_cost = std::numeric_limits<double>::infinity();

  double spacing = (hi - lo).maxCoeff() / (points - 1);
  const double final_spacing = std::max(grid_step / 256.0, 1e-12);
  for (int level = 0; level < 200; ++level) {
    spacing = 0.0;
    std::vector<int> counts(static_cast<size_t>(n));
    long total = 1;
    for (int c = 0; c < n; ++c) {
      const double width = box_hi(c) - box_lo(c);
      counts[static_cast<size_t>(c)] = width > 0.0 ? points : 1;
      spacing = std::max(spacing, width / (points - 1));
      total *= counts[static_cast<size_t>(c)];
    }
    // sweep the level grid in odometer order
    std::vector<int> idx(static_cast<size_t>(n), 0);
    Eigen::VectorXd x(n);
    for (long p = 0; p < total; ++p) {
      for (int c = 0; c < n; ++c) {
        const int cnt = counts[static_cast<size_t>(c)];
        x(c) = cnt == 1 ? box_lo(c)
                        : box_lo(c) + (box_hi(c) - box_lo(c)) * idx[static_cast<size_t>(c)] /
                              (cnt - 1);
      }
      if (feasible(x)) {
        const double cost = qp.cost(x);
        if (cost < best_cost) {
          best_cost = cost;
          best = x;
        }
      }
      for (int c = 0; c < n; ++c) {
        if (++idx[static_cast<size_t>(c)] < counts[static_cast<size_t>(c)]) break;
        idx[static_cast<size_t>(c)] = 0;
      }
    }
    if (best.size() == 0) {
      throw std::runtime_error("enumerate_tiny: no feasible grid point found");
    }
    if (spacing <= final_spacing) break;
    // zoom around the incumbent, clipped to the original box
    for (int c = 0; c < n; ++c) {
      const double half = 2.0 * std::max(spacing, final_spacing);
      box_lo(c) = std::max(lo(c), best(c) - half);
      box_hi(c) = std::min(hi(c), best(c) + half);
    }
  }
  return best;
}

ComplementarityReport complementarity_check(const NetworkModel& model,
                                            const CompactProblem& problem,
                                            const Eigen::VectorXd& x, double tol) {
  ComplementarityReport report;
  const int K = problem.K;
  const auto controls_at = [&](int k) { return extract_controls(problem, x, k); };
  std::vector<AppliedControls> by_step;
  by_step.reserve(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) by_step.push_back(controls_at(k));

  for (const auto& e : model.edges) {
    if (e.first > e.second) continue;  // one check per undirected pair
    const double cap_fwd = model.lines.at(e).f_max;
    const double cap_rev = model.lines.at({e.second, e.first}).f_max;
    for (int k = 0; k < K; ++k) {
      const double f_fwd = by_step[static_cast<size_t>(k)].flow.at(e);
      const double f_rev = by_step[static_cast<size_t>(k)].flow.at({e.second, e.first});
      const double prod = f_fwd * f_rev;
      const double scale = cap_fwd * cap_rev;
      report.max_flow_ratio = std::max(report.max_flow_ratio, prod / scale);
      if (prod > tol * scale) {
        std::ostringstream os;
        os << "edge (" << e.first << "," << e.second << ") step " << k
           << ": opposing flows both positive (" << f_fwd << ", " << f_rev << ")";
        report.violations.push_back(os.str());
      }
    }
  }
  for (const auto& [i, s] : model.storages) {
    for (int k = 0; k < K; ++k) {
      const double ec = by_step[static_cast<size_t>(k)].e_c.at(i);
      const double ed = by_step[static_cast<size_t>(k)].e_d.at(i);
      const double prod = ec * ed;
      const double scale = s.e_c_max * s.e_d_max;
      report.max_storage_ratio = std::max(report.max_storage_ratio, prod / scale);
      if (prod > tol * scale) {
        std::ostringstream os;
        os << "storage " << i << " step " << k << ": charging and discharging simultaneously ("
           << ec << ", " << ed << ")";
        report.violations.push_back(os.str());
      }
    }
  }
  return report;
}

}  // namespace gridmpc
