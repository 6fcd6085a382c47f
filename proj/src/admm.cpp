#include "gridmpc/admm.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gridmpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd refine_solve(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& G,
                             const Eigen::VectorXd& rhs) {
  Eigen::VectorXd u = llt.solve(rhs);
  const double tol = 1e-10 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::VectorXd r = rhs - G * u;
    if (r.lpNorm<Eigen::Infinity>() <= tol) break;
    u += llt.solve(r);
  }
  return u;
}

std::vector<const Eigen::VectorXd*> gather_edge(const std::map<Edge, Eigen::VectorXd>& by_edge,
                                                int i, const std::vector<int>& nbrs) {
  std::vector<const Eigen::VectorXd*> out;
  out.reserve(nbrs.size());
  for (int j : nbrs) out.push_back(&by_edge.at({i, j}));
  return out;
}

}  // namespace

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& G, const Eigen::VectorXd& rhs) {
  if (G.rows() != G.cols() || G.rows() != rhs.size()) {
    throw std::invalid_argument("spd_solve: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("spd_solve: matrix is not positive-definite");
  }
  Eigen::VectorXd u = refine_solve(llt, G, rhs);
  const double resid = (G * u - rhs).lpNorm<Eigen::Infinity>();
  if (!(resid <= 1e-10 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))) {
    std::ostringstream os;
    os << "spd_solve: refinement stalled at residual " << resid;
    throw std::runtime_error(os.str());
  }
  return u;
}

std::map<int, AdmmLocal> build_admm_locals(const CompactProblem& problem, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("build_admm_locals: rho must be > 0");
  std::map<int, AdmmLocal> out;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    AdmmLocal loc;
    loc.node = i;
    loc.K = lp.K;
    loc.n = lp.n;
    loc.m = lp.m;
    loc.nbrs = lp.nbrs;
    const int deg = lp.num_nbrs();
    loc.u_dim = lp.n + lp.K * deg;
    loc.rho = rho;

    // M = [[-A, 0], [-B_self, 1^T (x) I_K]], m_vec = [-a; -b]
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < lp.A.outerSize(); ++k) {
      for (SpMat::InnerIterator itA(lp.A, k); itA; ++itA) {
        trips.emplace_back(static_cast<int>(itA.row()), static_cast<int>(itA.col()),
                           -itA.value());
      }
    }
    for (int k = 0; k < lp.B_self.outerSize(); ++k) {
      for (SpMat::InnerIterator itB(lp.B_self, k); itB; ++itB) {
        trips.emplace_back(lp.m + static_cast<int>(itB.row()), static_cast<int>(itB.col()),
                           -itB.value());
      }
    }
    for (int t = 0; t < deg; ++t) {
      for (int k = 0; k < lp.K; ++k) {
        trips.emplace_back(lp.m + k, loc.copy_offset(t) + k, 1.0);
      }
    }
    loc.M = SpMat(lp.m + lp.K, loc.u_dim);
    loc.M.setFromTriplets(trips.begin(), trips.end());
    loc.m_vec = Eigen::VectorXd(lp.m + lp.K);
    loc.m_vec << -lp.a, -lp.b;

    for (int t = 0; t < deg; ++t) {
      const int j = lp.nbrs[static_cast<size_t>(t)];
      std::vector<Eigen::Triplet<double>> st, rt;
      for (int k = 0; k < lp.K; ++k) {
        st.emplace_back(k, loc.copy_offset(t) + k, 1.0);
        rt.emplace_back(k, lp.f_index(k, t), 1.0);
      }
      SpMat Sj(lp.K, loc.u_dim), Rj(lp.K, loc.u_dim);
      Sj.setFromTriplets(st.begin(), st.end());
      Rj.setFromTriplets(rt.begin(), rt.end());
      loc.S[j] = std::move(Sj);
      loc.R[j] = std::move(Rj);
    }

    std::vector<Eigen::Triplet<double>> pt;
    for (int r = 0; r < lp.n; ++r) pt.emplace_back(r, r, 1.0);
    loc.P_sel = SpMat(lp.n, loc.u_dim);
    loc.P_sel.setFromTriplets(pt.begin(), pt.end());

    loc.quad_ext = Eigen::VectorXd::Zero(loc.u_dim);
    loc.lin_ext = Eigen::VectorXd::Zero(loc.u_dim);
    loc.quad_ext.head(lp.n) = lp.cost_quad;
    loc.lin_ext.head(lp.n) = lp.cost_lin;

    // u-update normal matrix; copies are only covered by the rho S^T S term
    Eigen::MatrixXd G = Eigen::MatrixXd(loc.quad_ext.asDiagonal());
    G += rho * Eigen::MatrixXd(SpMat(loc.M.transpose() * loc.M));
    for (int j : loc.nbrs) {
      G += rho * Eigen::MatrixXd(SpMat(loc.S.at(j).transpose() * loc.S.at(j)));
      G += rho * Eigen::MatrixXd(SpMat(loc.R.at(j).transpose() * loc.R.at(j)));
    }
    loc.G = std::move(G);
    loc.llt.compute(loc.G);
    if (loc.llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "u-update system for node " << i << " is not positive-definite";
      throw NotSpdError(os.str());
    }
    out.emplace(i, std::move(loc));
  }
  return out;
}

AdmmIterate zero_admm_iterate(const CompactProblem& problem) {
  AdmmIterate it;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    it.u[i] = Eigen::VectorXd::Zero(lp.n + lp.K * lp.num_nbrs());
    it.v[i] = Eigen::VectorXd::Zero(lp.m + lp.K);
    it.mu[i] = Eigen::VectorXd::Zero(lp.m + lp.K);
    for (int j : lp.nbrs) {
      it.v1[{i, j}] = Eigen::VectorXd::Zero(lp.K);
      it.v2[{i, j}] = Eigen::VectorXd::Zero(lp.K);
      it.mu1[{i, j}] = Eigen::VectorXd::Zero(lp.K);
      it.mu2[{i, j}] = Eigen::VectorXd::Zero(lp.K);
    }
  }
  return it;
}

Eigen::VectorXd v_local_update(const AdmmLocal& loc, const Eigen::VectorXd& u_i,
                               const Eigen::VectorXd& mu_i, double rho) {
  return (loc.M * u_i - loc.m_vec - mu_i / rho).cwiseMax(0.0);
}

Eigen::VectorXd consensus_s_shift(const AdmmLocal& loc, int j, const Eigen::VectorXd& u_i,
                                  const Eigen::VectorXd& mu1_ij, double rho) {
  return loc.S.at(j) * u_i - mu1_ij / rho;
}

Eigen::VectorXd consensus_r_shift(const AdmmLocal& loc, int j, const Eigen::VectorXd& u_i,
                                  const Eigen::VectorXd& mu2_ij, double rho) {
  return loc.R.at(j) * u_i - mu2_ij / rho;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> v_consensus_update(
    const AdmmLocal& loc_i, const AdmmLocal& loc_j, const Eigen::VectorXd& u_i,
    const Eigen::VectorXd& u_j, const Eigen::VectorXd& mu1_ij, const Eigen::VectorXd& mu2_ji,
    double rho) {
  const Eigen::VectorXd s = consensus_s_shift(loc_i, loc_j.node, u_i, mu1_ij, rho);
  const Eigen::VectorXd r = consensus_r_shift(loc_j, loc_i.node, u_j, mu2_ji, rho);
  Eigen::VectorXd avg = consensus_average(s, r);
  return {avg, avg};
}

Eigen::VectorXd u_update(const AdmmLocal& loc, const Eigen::VectorXd& v_i,
                         const std::vector<const Eigen::VectorXd*>& v1_by_nbr,
                         const std::vector<const Eigen::VectorXd*>& v2_by_nbr,
                         const Eigen::VectorXd& mu_i,
                         const std::vector<const Eigen::VectorXd*>& mu1_by_nbr,
                         const std::vector<const Eigen::VectorXd*>& mu2_by_nbr, double rho) {
  // minimize Phi(u) + rho/2 ||M u - t_M||^2 + rho/2 sum_j ||S u - t1||^2 + ||R u - t2||^2
  Eigen::VectorXd rhs = -loc.lin_ext;
  const Eigen::VectorXd t_M = v_i + loc.m_vec + mu_i / rho;
  rhs += rho * (loc.M.transpose() * t_M);
  for (size_t t = 0; t < loc.nbrs.size(); ++t) {
    const int j = loc.nbrs[t];
    const Eigen::VectorXd t1 = *v1_by_nbr[t] + *mu1_by_nbr[t] / rho;
    const Eigen::VectorXd t2 = *v2_by_nbr[t] + *mu2_by_nbr[t] / rho;
    rhs += rho * (loc.S.at(j).transpose() * t1);
    rhs += rho * (loc.R.at(j).transpose() * t2);
  }
  return refine_solve(loc.llt, loc.G, rhs);
}

MultiplierUpdate multiplier_update(const AdmmLocal& loc, const Eigen::VectorXd& u_i,
                                   const Eigen::VectorXd& v_i,
                                   const std::vector<const Eigen::VectorXd*>& v1_by_nbr,
                                   const std::vector<const Eigen::VectorXd*>& v2_by_nbr,
                                   Eigen::VectorXd& mu_i,
                                   std::vector<Eigen::VectorXd*>& mu1_by_nbr,
                                   std::vector<Eigen::VectorXd*>& mu2_by_nbr, double rho) {
  MultiplierUpdate out;
  out.r_local = loc.M * u_i - loc.m_vec - v_i;
  mu_i -= rho * out.r_local;
  for (size_t t = 0; t < loc.nbrs.size(); ++t) {
    const int j = loc.nbrs[t];
    Eigen::VectorXd r1 = loc.S.at(j) * u_i - *v1_by_nbr[t];
    Eigen::VectorXd r2 = loc.R.at(j) * u_i - *v2_by_nbr[t];
    *mu1_by_nbr[t] -= rho * r1;
    *mu2_by_nbr[t] -= rho * r2;
    out.r1[j] = std::move(r1);
    out.r2[j] = std::move(r2);
  }
  return out;
}

AdmmResiduals residuals(const std::map<int, AdmmLocal>& locals, const AdmmIterate& it,
                        double v_change, double rho) {
  AdmmResiduals res;
  res.dual = rho * v_change;
  for (const auto& [i, loc] : locals) {
    res.primal = std::max(
        res.primal, (loc.M * it.u.at(i) - loc.m_vec - it.v.at(i)).lpNorm<Eigen::Infinity>());
    for (int j : loc.nbrs) {
      res.consensus = std::max(
          res.consensus,
          (loc.S.at(j) * it.u.at(i) - it.v1.at({i, j})).lpNorm<Eigen::Infinity>());
      res.consensus = std::max(
          res.consensus,
          (loc.R.at(j) * it.u.at(i) - it.v2.at({i, j})).lpNorm<Eigen::Infinity>());
    }
  }
  return res;
}

Eigen::VectorXd extract_x(const AdmmLocal& loc, const Eigen::VectorXd& u_i) {
  return loc.P_sel * u_i;
}

Eigen::VectorXd stack_x_from_u(const CompactProblem& problem,
                               const std::map<int, AdmmLocal>& locals, const AdmmIterate& it) {
  Eigen::VectorXd x(problem.total_n);
  for (int i : problem.nodes) {
    x.segment(problem.x_offset.at(i), problem.local(i).n) = extract_x(locals.at(i), it.u.at(i));
  }
  return x;
}

AdmmIterationOutcome admm_iteration_body(const CompactProblem& problem,
                                         const std::map<int, AdmmLocal>& locals, AdmmIterate& it,
                                         const std::map<Edge, Eigen::VectorXd>& s_shift,
                                         const std::map<Edge, Eigen::VectorXd>& r_shift,
                                         const AdmmConfig& config, SolveTrace* trace, int s) {
  const double rho = config.rho;
  double v_change = 0.0;
  // (26a)
  for (int i : problem.nodes) {
    Eigen::VectorXd v_new = v_local_update(locals.at(i), it.u.at(i), it.mu.at(i), rho);
    v_change = std::max(v_change, (v_new - it.v.at(i)).lpNorm<Eigen::Infinity>());
    it.v[i] = std::move(v_new);
  }
  // (26b)-(26c)
  for (int i : problem.nodes) {
    const auto& loc = locals.at(i);
    for (int j : loc.nbrs) {
      Eigen::VectorXd v1_new = consensus_average(s_shift.at({i, j}), r_shift.at({j, i}));
      Eigen::VectorXd v2_new = consensus_average(s_shift.at({j, i}), r_shift.at({i, j}));
      v_change = std::max(v_change, (v1_new - it.v1.at({i, j})).lpNorm<Eigen::Infinity>());
      v_change = std::max(v_change, (v2_new - it.v2.at({i, j})).lpNorm<Eigen::Infinity>());
      it.v1[{i, j}] = std::move(v1_new);
      it.v2[{i, j}] = std::move(v2_new);
    }
  }
  // (26d)
  for (int i : problem.nodes) {
    const auto& loc = locals.at(i);
    it.u[i] = u_update(loc, it.v.at(i), gather_edge(it.v1, i, loc.nbrs),
                       gather_edge(it.v2, i, loc.nbrs), it.mu.at(i),
                       gather_edge(it.mu1, i, loc.nbrs), gather_edge(it.mu2, i, loc.nbrs), rho);
  }
  // (26e)-(26g)
  AdmmIterationOutcome out;
  out.residuals.dual = rho * v_change;
  for (int i : problem.nodes) {
    const auto& loc = locals.at(i);
    std::vector<Eigen::VectorXd*> mu1p, mu2p;
    mu1p.reserve(loc.nbrs.size());
    mu2p.reserve(loc.nbrs.size());
    for (int j : loc.nbrs) {
      mu1p.push_back(&it.mu1.at({i, j}));
      mu2p.push_back(&it.mu2.at({i, j}));
    }
    const MultiplierUpdate mu =
        multiplier_update(loc, it.u.at(i), it.v.at(i), gather_edge(it.v1, i, loc.nbrs),
                          gather_edge(it.v2, i, loc.nbrs), it.mu.at(i), mu1p, mu2p, rho);
    out.residuals.primal = std::max(out.residuals.primal, mu.r_local.lpNorm<Eigen::Infinity>());
    for (const auto& [j, r1] : mu.r1)
      out.residuals.consensus = std::max(out.residuals.consensus, r1.lpNorm<Eigen::Infinity>());
    for (const auto& [j, r2] : mu.r2)
      out.residuals.consensus = std::max(out.residuals.consensus, r2.lpNorm<Eigen::Infinity>());
  }
  it.iter = s + 1;

  if (trace) {
    SolveTraceRow row;
    row.iter = s;
    const Eigen::VectorXd x = stack_x_from_u(problem, locals, it);
    row.cost = total_cost(problem, x);
    row.primal_infeas = out.residuals.primal;
    row.consensus_resid = out.residuals.consensus;
    row.dual_value = kNaN;
    row.dist_to_ref =
        config.reference ? (x - *config.reference).lpNorm<Eigen::Infinity>() : kNaN;
    trace->rows.push_back(row);
  }
  out.stop = out.residuals.all_below(config.tol);
  return out;
}

AdmmResult run_admm(const CompactProblem& problem, const AdmmConfig& config) {
  if (!(config.rho > 0.0)) throw std::invalid_argument("run_admm: rho must be > 0");
  const double rho = config.rho;
  const auto locals = build_admm_locals(problem, rho);

  AdmmResult res;
  res.trace.has_reference = config.reference != nullptr;
  AdmmIterate it = config.warm_start ? *config.warm_start : zero_admm_iterate(problem);

  for (int s = 0; s < config.max_iters; ++s) {
    // shifted estimates from the current u and multipliers (what the
    // harness ships across each directed edge)
    std::map<Edge, Eigen::VectorXd> s_shift, r_shift;
    for (int i : problem.nodes) {
      const auto& loc = locals.at(i);
      for (int j : loc.nbrs) {
        s_shift[{i, j}] = consensus_s_shift(loc, j, it.u.at(i), it.mu1.at({i, j}), rho);
        r_shift[{i, j}] = consensus_r_shift(loc, j, it.u.at(i), it.mu2.at({i, j}), rho);
      }
    }
    const auto outcome = admm_iteration_body(problem, locals, it, s_shift, r_shift, config,
                                             config.record_trace ? &res.trace : nullptr, s);
    res.residuals = outcome.residuals;
    if (outcome.stop) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it.iter;
  res.x = stack_x_from_u(problem, locals, it);
  res.iterate = std::move(it);
  return res;
}

}  // namespace gridmpc
