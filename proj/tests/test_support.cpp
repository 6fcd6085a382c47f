#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridmpc/rng.hpp"

namespace gridmpc::testing {

TinyCase tiny_case() {
  TinyCase tc;
  tc.model.num_nodes = 2;
  tc.model.horizon = 1;
  tc.model.edges = {{1, 2}, {2, 1}};
  GeneratorParams g;
  g.alpha = 2.0;
  g.omega = 0.0;
  g.p_max = 100.0;
  g.ramp_lo = -100.0;
  g.ramp_hi = 100.0;
  g.p_prev = 0.0;
  tc.model.generators[1] = g;
  LineParams fwd;
  fwd.f_max = 20.0;
  fwd.varpi = 0.2;
  fwd.nu = 0.5;
  LineParams rev = fwd;
  tc.model.lines[{1, 2}] = fwd;
  tc.model.lines[{2, 1}] = rev;

  tc.forecast.horizon = 1;
  tc.forecast.epsilon = 0.25;
  tc.forecast.demand_mean[{1, 0}] = 0.0;
  tc.forecast.demand_mean[{2, 0}] = 10.0;
  tc.forecast.demand_var[{1, 0}] = 0.0;
  tc.forecast.demand_var[{2, 0}] = 0.0;
  tc.forecast.cap_mean[{1, 0}] = 100.0;
  tc.forecast.cap_var[{1, 0}] = 0.0;
  return tc;
}

NetworkModel random_model(std::uint64_t seed, int max_nodes, int max_k) {
  std::mt19937_64 eng(rng::splitmix64(seed));
  NetworkModel model;
  model.num_nodes = 2 + static_cast<int>(eng() % static_cast<std::uint64_t>(max_nodes - 1));
  model.horizon = 1 + static_cast<int>(eng() % static_cast<std::uint64_t>(max_k));
  model.sample_time = 1.0;

  // random spanning tree plus a few extra edges
  for (int i = 2; i <= model.num_nodes; ++i) {
    const int j = 1 + static_cast<int>(eng() % static_cast<std::uint64_t>(i - 1));
    model.edges.insert({i, j});
    model.edges.insert({j, i});
  }
  const int extra = static_cast<int>(eng() % 3);
  for (int e = 0; e < extra; ++e) {
    const int i = 1 + static_cast<int>(eng() % static_cast<std::uint64_t>(model.num_nodes));
    const int j = 1 + static_cast<int>(eng() % static_cast<std::uint64_t>(model.num_nodes));
    if (i != j) {
      model.edges.insert({i, j});
      model.edges.insert({j, i});
    }
  }
  model.lines = sample_line_params(eng(), model.edges);

  // node 1 always generates enough to cover every demand
  GeneratorParams big;
  big.alpha = rng::uniform(eng, 0.5, 2.0);
  big.omega = rng::uniform(eng, 0.0, 20.0);
  big.p_max = 300.0;
  big.ramp_lo = -150.0;
  big.ramp_hi = 150.0;
  big.p_prev = 150.0;
  model.generators[1] = big;
  for (int i = 2; i <= model.num_nodes; ++i) {
    if (eng() % 2 == 0) {
      GeneratorParams g;
      g.alpha = rng::uniform(eng, 0.5, 2.0);
      g.omega = rng::uniform(eng, 0.0, 20.0);
      g.p_max = rng::uniform(eng, 50.0, 150.0);
      g.ramp_hi = rng::uniform(eng, 20.0, 80.0);
      g.ramp_lo = -g.ramp_hi;
      g.p_prev = 0.5 * g.p_max;
      model.generators[i] = g;
    }
    if (eng() % 2 == 0) {
      StorageParams s;
      s.eff = rng::uniform(eng, 0.0, 0.2);
      // discharge gain at least the charge gain, like the benchmark units
      s.c = rng::uniform(eng, 0.9, 0.97);
      s.d = rng::uniform(eng, s.c, 1.0);
      s.e_c_max = rng::uniform(eng, 10.0, 40.0);
      s.e_d_max = rng::uniform(eng, 10.0, 40.0);
      s.soc_max = rng::uniform(eng, 50.0, 200.0);
      s.soc_prev = rng::uniform(eng, 0.2, 0.8) * s.soc_max;
      s.upsilon = rng::uniform(eng, 0.5, 1.5);
      s.varsigma = rng::uniform(eng, 0.5, 1.5);
      model.storages[i] = s;
    }
  }
  return model;
}

ForecastSeries random_forecast(const NetworkModel& model, std::uint64_t seed) {
  std::mt19937_64 eng(rng::splitmix64(seed ^ 0x5bd1e995u));
  ForecastSeries fs;
  fs.horizon = model.horizon;
  fs.epsilon = 0.25;
  for (int i = 1; i <= model.num_nodes; ++i) {
    for (int k = 0; k < model.horizon; ++k) {
      fs.demand_mean[{i, k}] = rng::uniform(eng, 0.0, 15.0);
      fs.demand_var[{i, k}] = rng::uniform(eng, 0.0, 3.0);
    }
  }
  for (const auto& [i, g] : model.generators) {
    for (int k = 0; k < model.horizon; ++k) {
      fs.cap_mean[{i, k}] = g.p_max;
      fs.cap_var[{i, k}] = 0.0;
    }
  }
  return fs;
}

FdDualGradient fd_dual_gradient(const CompactProblem& problem,
                                const std::map<int, Eigen::VectorXd>& lambda,
                                const std::map<int, Eigen::VectorXd>& zeta, double delta) {
  FdDualGradient out;
  auto probe = [&](std::map<int, Eigen::VectorXd> lam, std::map<int, Eigen::VectorXd> zet) {
    return dual_value(problem, lam, zet);
  };
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    Eigen::VectorXd gl(lp.m);
    for (int r = 0; r < lp.m; ++r) {
      auto lam_hi = lambda;
      auto lam_lo = lambda;
      lam_hi[i](r) += delta;
      lam_lo[i](r) -= delta;
      gl(r) = (probe(lam_hi, zeta) - probe(lam_lo, zeta)) / (2.0 * delta);
    }
    out.g_lambda[i] = gl;
    Eigen::VectorXd gz(lp.K);
    for (int r = 0; r < lp.K; ++r) {
      auto z_hi = zeta;
      auto z_lo = zeta;
      z_hi[i](r) += delta;
      z_lo[i](r) -= delta;
      gz(r) = (probe(lambda, z_hi) - probe(lambda, z_lo)) / (2.0 * delta);
    }
    out.g_zeta[i] = gz;
  }
  return out;
}

AdmmIterate admm_warm_start_from_reference(const CompactProblem& problem,
                                           const std::map<int, AdmmLocal>& locals,
                                           const ReferenceSolution& ref) {
  AdmmIterate it;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const auto& loc = locals.at(i);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(loc.u_dim);
    u.head(lp.n) = ref.x.segment(problem.x_offset.at(i), lp.n);
    for (int t = 0; t < lp.num_nbrs(); ++t) {
      const int j = lp.nbrs[static_cast<size_t>(t)];
      const auto& lpj = problem.local(j);
      const int pos_i = lpj.nbr_pos(i);
      for (int k = 0; k < lp.K; ++k) {
        u(loc.copy_offset(t) + k) =
            ref.x(problem.x_offset.at(j) + lpj.f_index(k, pos_i));
      }
    }
    it.u[i] = u;
    it.v[i] = loc.M * u - loc.m_vec;
    Eigen::VectorXd mu(loc.m + loc.K);
    mu << ref.lambda.at(i), ref.zeta.at(i);
    it.mu[i] = mu;
  }
  for (int i : problem.nodes) {
    const auto& loc = locals.at(i);
    for (int j : loc.nbrs) {
      it.v1[{i, j}] = loc.S.at(j) * it.u.at(i);
      it.v2[{i, j}] = loc.R.at(j) * it.u.at(i);
      it.mu1[{i, j}] = -ref.zeta.at(i);
      it.mu2[{i, j}] = ref.zeta.at(j);
    }
  }
  return it;
}

RawCheck raw_constraints_hold(const NetworkModel& model, const TightenedForecast& tf,
                              const CompactProblem& problem, const Eigen::VectorXd& x) {
  const int K = model.horizon;
  double margin = std::numeric_limits<double>::infinity();
  auto track = [&margin](double slack) { margin = std::min(margin, slack); };

  for (int i = 1; i <= model.num_nodes; ++i) {
    const auto& lp = problem.local(i);
    const int off = problem.x_offset.at(i);
    if (lp.has_gen) {
      const auto& g = model.generators.at(i);
      for (int k = 0; k < K; ++k) {
        const double p = x(off + lp.p_index(k));
        track(p);
        track(tf.p_tilde.at({i, k}) - p);
        const double prev = k == 0 ? g.p_prev : x(off + lp.p_index(k - 1));
        track(g.ramp_hi - (p - prev));
        track((p - prev) - g.ramp_lo);
      }
    }
    if (lp.has_store) {
      const auto& s = model.storages.at(i);
      double gain = 0.0;
      double leak_pow = 1.0;
      for (int k = 0; k < K; ++k) {
        gain += leak_pow;
        leak_pow *= (1.0 - s.eff);
        const double ec = x(off + lp.ec_index(k));
        const double ed = x(off + lp.ed_index(k));
        track(ec);
        track(s.e_c_max - ec);
        track(ed);
        track(s.e_d_max - ed);
        const double soc = leak_pow * s.soc_prev + gain * (s.c * ec - s.d * ed);
        track(soc);
        track(s.soc_max - soc);
      }
    }
    for (int t = 0; t < lp.num_nbrs(); ++t) {
      const int j = lp.nbrs[static_cast<size_t>(t)];
      const double cap = model.lines.at({i, j}).f_max;
      for (int k = 0; k < K; ++k) {
        const double flow = x(off + lp.f_index(k, t));
        track(flow);
        track(cap - flow);
      }
    }
    for (int k = 0; k < K; ++k) {
      double balance = 0.0;
      if (lp.has_gen) balance += x(off + lp.p_index(k));
      if (lp.has_store) balance += -x(off + lp.ec_index(k)) + x(off + lp.ed_index(k));
      for (int t = 0; t < lp.num_nbrs(); ++t) {
        const int j = lp.nbrs[static_cast<size_t>(t)];
        const auto& lpj = problem.local(j);
        balance -= x(off + lp.f_index(k, t));
        balance += x(problem.x_offset.at(j) + lpj.f_index(k, lpj.nbr_pos(i)));
      }
      track(balance - tf.d_tilde.at({i, k}));
    }
  }
  RawCheck out;
  out.margin = margin;
  out.holds = margin >= 0.0;
  return out;
}

double stacked_margin(const StackedConstraints& sc, const Eigen::VectorXd& x) {
  return (sc.h - sc.H * x).minCoeff();
}

}  // namespace gridmpc::testing
