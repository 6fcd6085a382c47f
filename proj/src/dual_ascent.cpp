#include "gridmpc/dual_ascent.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridmpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double neumaier_add(double& sum, double& comp, double term) {
  const double t = sum + term;
  comp += (std::abs(sum) >= std::abs(term)) ? (sum - t) + term : (term - t) + sum;
  sum = t;
  return sum;
}

std::vector<const Eigen::VectorXd*> gather_nbr(const std::map<int, Eigen::VectorXd>& by_node,
                                               const std::vector<int>& nbrs) {
  std::vector<const Eigen::VectorXd*> out;
  out.reserve(nbrs.size());
  for (int j : nbrs) out.push_back(&by_node.at(j));
  return out;
}

}  // namespace

DualIterate zero_dual_iterate(const CompactProblem& problem) {
  DualIterate it;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    it.lambda[i] = Eigen::VectorXd::Zero(lp.m);
    it.zeta[i] = Eigen::VectorXd::Zero(lp.K);
  }
  return it;
}

Eigen::VectorXd dual_linear_term(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                 const Eigen::VectorXd& zeta_i,
                                 const std::vector<const Eigen::VectorXd*>& zeta_nbrs) {
  if (lambda_i.size() != lp.m || zeta_i.size() != lp.K ||
      zeta_nbrs.size() != lp.nbrs.size()) {
    throw std::invalid_argument("dual_linear_term: dimension mismatch");
  }
  Eigen::VectorXd c = lp.A.transpose() * lambda_i;
  c += lp.B_self.transpose() * zeta_i;
  for (size_t t = 0; t < lp.nbrs.size(); ++t) {
    c += lp.B_out.at(lp.nbrs[t]).transpose() * (*zeta_nbrs[t]);
  }
  return c;
}

Eigen::VectorXd local_primal_argmin(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                    const Eigen::VectorXd& zeta_i,
                                    const std::vector<const Eigen::VectorXd*>& zeta_nbrs) {
  if (lp.n > 0 && !(lp.cost_quad.minCoeff() > 0.0)) {
    throw std::domain_error("local_primal_argmin: non-positive quadratic coefficient");
  }
  const Eigen::VectorXd c = dual_linear_term(lp, lambda_i, zeta_i, zeta_nbrs);
  return (-(lp.cost_lin + c).array() / lp.cost_quad.array()).matrix();
}

Eigen::VectorXd local_primal_argmin(const LocalProblem& lp, const Eigen::VectorXd& lambda_i,
                                    const Eigen::VectorXd& zeta_i,
                                    const std::map<int, Eigen::VectorXd>& zeta_all) {
  return local_primal_argmin(lp, lambda_i, zeta_i, gather_nbr(zeta_all, lp.nbrs));
}

Eigen::VectorXd flow_contribution(const LocalProblem& lp, int to, const Eigen::VectorXd& x_i) {
  return lp.B_out.at(to) * x_i;
}

Eigen::VectorXd lambda_gradient(const LocalProblem& lp, const Eigen::VectorXd& x_i) {
  return lp.A * x_i - lp.a;
}

Eigen::VectorXd zeta_gradient(const LocalProblem& lp, const Eigen::VectorXd& x_i,
                              const std::vector<const Eigen::VectorXd*>& flow_contribs) {
  Eigen::VectorXd g = lp.B_self * x_i;
  for (const auto* contrib : flow_contribs) g += *contrib;
  g -= lp.b;
  return g;
}

double DualGradient::max_positive_part() const {
  double v = 0.0;
  for (const auto& [i, g] : g_lambda) {
    if (g.size() > 0) v = std::max(v, g.maxCoeff());
  }
  for (const auto& [i, g] : g_zeta) {
    if (g.size() > 0) v = std::max(v, g.maxCoeff());
  }
  return std::max(v, 0.0);
}

DualGradient dual_gradient(const CompactProblem& problem,
                           const std::map<int, Eigen::VectorXd>& x_star) {
  DualGradient out;
  // contributions computed at the source agent, consumed sorted by source
  std::map<std::pair<int, int>, Eigen::VectorXd> contribs;
  for (int j : problem.nodes) {
    const auto& lpj = problem.local(j);
    for (int i : lpj.nbrs) contribs[{j, i}] = flow_contribution(lpj, i, x_star.at(j));
  }
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    out.g_lambda[i] = lambda_gradient(lp, x_star.at(i));
    std::vector<const Eigen::VectorXd*> inc;
    inc.reserve(lp.nbrs.size());
    for (int j : lp.nbrs) inc.push_back(&contribs.at({j, i}));
    out.g_zeta[i] = zeta_gradient(lp, x_star.at(i), inc);
  }
  return out;
}

double dual_value_at(const CompactProblem& problem, const std::map<int, Eigen::VectorXd>& lambda,
                     const std::map<int, Eigen::VectorXd>& zeta,
                     const std::map<int, Eigen::VectorXd>& x_star) {
  double sum = 0.0, comp = 0.0;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const auto& x = x_star.at(i);
    const Eigen::VectorXd c = dual_linear_term(lp, lambda.at(i), zeta.at(i),
                                               gather_nbr(zeta, lp.nbrs));
    const double term = cost_eval(lp, x) + c.dot(x) - lp.a.dot(lambda.at(i)) -
                        lp.b.dot(zeta.at(i));
    neumaier_add(sum, comp, term);
  }
  return sum + comp;
}

double dual_value(const CompactProblem& problem, const std::map<int, Eigen::VectorXd>& lambda,
                  const std::map<int, Eigen::VectorXd>& zeta) {
  std::map<int, Eigen::VectorXd> x_star;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    x_star[i] = local_primal_argmin(lp, lambda.at(i), zeta.at(i), gather_nbr(zeta, lp.nbrs));
  }
  return dual_value_at(problem, lambda, zeta, x_star);
}

DualIterate dual_step(const CompactProblem& problem, const DualIterate& it, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("dual_step: step must be > 0");
  const DualGradient g = dual_gradient(problem, it.x_star);
  DualIterate next = it;
  for (int i : problem.nodes) {
    next.lambda[i] = (it.lambda.at(i) + step * g.g_lambda.at(i)).cwiseMax(0.0);
    next.zeta[i] = (it.zeta.at(i) + step * g.g_zeta.at(i)).cwiseMax(0.0);
  }
  next.iter = it.iter + 1;
  return next;
}

double lipschitz_bound(const CompactProblem& problem) {
  if (!(problem.sigma_min > 0.0)) {
    throw std::domain_error("lipschitz_bound: sigma_min must be > 0");
  }
  const StackedConstraints sc = stack_constraints(problem);
  const int n = problem.total_n;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double lam = 0.0;
  for (int s = 0; s < 10000; ++s) {
    Eigen::VectorXd u = sc.H.transpose() * (sc.H * v).eval();
    const double lam_new = v.dot(u);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;  // H == 0
    v = u / norm;
    if (s > 2 && std::abs(lam_new - lam) <= 1e-13 * std::max(1.0, lam_new)) {
      lam = lam_new;
      break;
    }
    lam = lam_new;
  }
  return lam * (1.0 + 1e-9) / problem.sigma_min;
}

Eigen::VectorXd stack_x(const CompactProblem& problem,
                        const std::map<int, Eigen::VectorXd>& x_by_node) {
  Eigen::VectorXd x(problem.total_n);
  for (int i : problem.nodes) {
    x.segment(problem.x_offset.at(i), problem.local(i).n) = x_by_node.at(i);
  }
  return x;
}

DualIterationTail dual_iteration_tail(const CompactProblem& problem, DualIterate& it,
                                      const DualGradient& g, double lipschitz,
                                      const DualAscentConfig& config, SolveTrace* trace, int s) {
  DualIterationTail out;
  const double step = 1.0 / lipschitz;
  out.infeas = g.max_positive_part();
  out.psi = dual_value_at(problem, it.lambda, it.zeta, it.x_star);

  if (trace) {
    SolveTraceRow row;
    row.iter = s;
    row.cost = total_cost(problem, stack_x(problem, it.x_star));
    row.primal_infeas = out.infeas;
    row.consensus_resid = 0.0;
    row.dual_value = out.psi;
    row.dist_to_ref =
        config.reference
            ? (stack_x(problem, it.x_star) - *config.reference).lpNorm<Eigen::Infinity>()
            : kNaN;
    trace->rows.push_back(row);
  }

  // (22b)-(22c) simultaneous projected updates
  double max_delta = 0.0;
  for (int i : problem.nodes) {
    Eigen::VectorXd lam_new = (it.lambda.at(i) + step * g.g_lambda.at(i)).cwiseMax(0.0);
    Eigen::VectorXd zeta_new = (it.zeta.at(i) + step * g.g_zeta.at(i)).cwiseMax(0.0);
    if (lam_new.size() > 0)
      max_delta = std::max(max_delta, (lam_new - it.lambda.at(i)).lpNorm<Eigen::Infinity>());
    max_delta = std::max(max_delta, (zeta_new - it.zeta.at(i)).lpNorm<Eigen::Infinity>());
    it.lambda[i] = std::move(lam_new);
    it.zeta[i] = std::move(zeta_new);
  }
  it.iter = s + 1;
  out.max_delta = max_delta;
  out.stop = (max_delta * lipschitz <= config.tol_grad && out.infeas <= config.tol_feas);
  return out;
}

DualAscentResult run_dual_ascent(const CompactProblem& problem, const DualAscentConfig& config) {
  DualAscentResult res;
  const double L = config.lipschitz > 0.0 ? config.lipschitz : lipschitz_bound(problem);
  if (!(L > 0.0)) throw std::invalid_argument("run_dual_ascent: nonpositive Lipschitz constant");
  res.lipschitz_used = L;
  res.trace.has_reference = config.reference != nullptr;

  DualIterate it = config.warm_start ? *config.warm_start : zero_dual_iterate(problem);
  double prev_psi = -std::numeric_limits<double>::infinity();
  res.max_ascent_violation = -std::numeric_limits<double>::infinity();

  for (int s = 0; s < config.max_iters; ++s) {
    // (22a) closed-form local minimizers
    for (int i : problem.nodes) {
      const auto& lp = problem.local(i);
      it.x_star[i] =
          local_primal_argmin(lp, it.lambda.at(i), it.zeta.at(i), gather_nbr(it.zeta, lp.nbrs));
    }
    const DualGradient g = dual_gradient(problem, it.x_star);
    const auto tail = dual_iteration_tail(problem, it, g, L, config,
                                          config.record_trace ? &res.trace : nullptr, s);
    res.final_infeas = tail.infeas;
    if (s > 0) res.max_ascent_violation = std::max(res.max_ascent_violation, prev_psi - tail.psi);
    prev_psi = tail.psi;
    if (tail.stop) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it.iter;

  // primal recovery for the final duals
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    it.x_star[i] =
        local_primal_argmin(lp, it.lambda.at(i), it.zeta.at(i), gather_nbr(it.zeta, lp.nbrs));
  }
  res.x = stack_x(problem, it.x_star);
  res.iterate = std::move(it);
  if (!std::isfinite(res.max_ascent_violation)) res.max_ascent_violation = 0.0;
  return res;
}

}  // namespace gridmpc
