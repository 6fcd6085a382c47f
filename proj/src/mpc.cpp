#include "gridmpc/mpc.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "gridmpc/rng.hpp"

namespace gridmpc {

PlantState initial_plant_state(const NetworkModel& model) {
  PlantState state;
  for (const auto& [i, s] : model.storages) state.soc[i] = s.soc_prev;
  for (const auto& [i, g] : model.generators) state.p_prev[i] = g.p_prev;
  state.t = 0;
  return state;
}

NetworkModel apply_plant_state(const NetworkModel& model, const PlantState& state) {
  NetworkModel out = model;
  for (auto& [i, s] : out.storages) s.soc_prev = state.soc.at(i);
  for (auto& [i, g] : out.generators) g.p_prev = state.p_prev.at(i);
  return out;
}

StepPlantResult step_plant(const NetworkModel& model, const PlantState& state,
                           const AppliedControls& controls,
                           const std::map<int, double>& realized_demand) {
  StepPlantResult res;
  res.next = state;
  res.next.t = state.t + 1;

  for (const auto& [i, s] : model.storages) {
    const double e_c = controls.e_c.count(i) ? controls.e_c.at(i) : 0.0;
    const double e_d = controls.e_d.count(i) ? controls.e_d.at(i) : 0.0;
    double soc = (1.0 - s.eff) * state.soc.at(i) + s.c * e_c - s.d * e_d;
    const double tol = 1e-9 * (1.0 + s.soc_max);
    if (soc < -tol || soc > s.soc_max + tol) {
      std::ostringstream os;
      os << "storage " << i << " state " << soc << " outside [0," << s.soc_max
         << "] after step " << state.t << "; clamped";
      res.warnings.push_back(os.str());
      res.soc_clamped = true;
    }
    res.next.soc[i] = std::min(std::max(soc, 0.0), s.soc_max);
  }
  for (const auto& [i, g] : model.generators) {
    res.next.p_prev[i] = controls.p.count(i) ? controls.p.at(i) : 0.0;
  }

  for (int i = 1; i <= model.num_nodes; ++i) {
    double balance = 0.0;
    if (controls.p.count(i)) balance += controls.p.at(i);
    if (controls.e_c.count(i)) balance -= controls.e_c.at(i);
    if (controls.e_d.count(i)) balance += controls.e_d.at(i);
    for (int j : neighbor_set(model, i)) {
      balance += controls.flow.count({j, i}) ? controls.flow.at({j, i}) : 0.0;
      balance -= controls.flow.count({i, j}) ? controls.flow.at({i, j}) : 0.0;
    }
    const double d = realized_demand.count(i) ? realized_demand.at(i) : 0.0;
    res.slack[i] = balance - d;
  }
  return res;
}

std::map<int, double> sample_realized_demand(const ForecastSeries& forecast, std::uint64_t seed,
                                             int k) {
  std::map<int, double> out;
  for (const auto& [key, mean] : forecast.demand_mean) {
    if (key.second != k) continue;
    const int node = key.first;
    const double var = forecast.demand_var_at(node, k);
    std::mt19937_64 eng(rng::substream(seed, static_cast<std::uint64_t>(node),
                                       static_cast<std::uint64_t>(k)));
    const double draw = mean + std::sqrt(var) * rng::gaussian(eng);
    out[node] = std::max(draw, 0.0);
  }
  return out;
}

MpcLog run_receding_horizon(const NetworkModel& model, const ForecastProvider& forecasts,
                            const MpcConfig& config) {
  MpcLog log;
  NetworkModel current = model;
  PlantState state = initial_plant_state(model);

  for (int t = 0; t < config.steps; ++t) {
    const ForecastSeries window = forecasts(t);
    CompactProblem problem;
    try {
      problem = build_compact(current, window);
    } catch (const std::exception& e) {
      log.completed = false;
      log.failure = e.what();
      break;
    }

    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
    if (config.solver == MpcSolverKind::kDualAscent) {
      DualAscentConfig dc = config.dual;
      dc.record_trace = false;
      const auto r = run_dual_ascent(problem, dc);
      x = r.x;
      iterations = r.iterations;
      converged = r.converged;
    } else {
      AdmmConfig ac = config.admm;
      ac.record_trace = false;
      const auto r = run_admm(problem, ac);
      x = r.x;
      iterations = r.iterations;
      converged = r.converged;
    }
    if (!converged) {
      std::ostringstream os;
      os << "solver did not converge at step " << t << " after " << iterations << " iterations";
      log.completed = false;
      log.failure = os.str();
      break;
    }

    MpcStepRecord rec;
    rec.step = t;
    rec.applied = extract_controls(problem, x, 0);
    rec.iterations = iterations;
    rec.converged = converged;
    if (config.realized_expectation) {
      for (int i = 1; i <= current.num_nodes; ++i) rec.realized[i] = window.demand_mean_at(i, 0);
    } else {
      rec.realized = sample_realized_demand(
          window, rng::substream(config.seed, static_cast<std::uint64_t>(t)), 0);
    }

    const auto stepped = step_plant(current, state, rec.applied, rec.realized);
    rec.slack = stepped.slack;
    rec.soc_clamped = stepped.soc_clamped;
    log.steps.push_back(std::move(rec));

    state = stepped.next;
    current = apply_plant_state(current, state);
  }
  return log;
}

void write_mpc_csv(const MpcLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open mpc log file: " + path);
  std::fprintf(f, "step,node,P,E_c,E_d,F_out,F_in,realized_demand,slack\n");
  for (const auto& rec : log.steps) {
    std::map<int, double> f_out, f_in;
    for (const auto& [edge, value] : rec.applied.flow) {
      f_out[edge.first] += value;
      f_in[edge.second] += value;
    }
    for (const auto& [node, slack] : rec.slack) {
      auto get = [node](const std::map<int, double>& m) {
        auto it = m.find(node);
        return it == m.end() ? 0.0 : it->second;
      };
      std::fprintf(f, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", rec.step, node,
                   get(rec.applied.p), get(rec.applied.e_c), get(rec.applied.e_d), get(f_out),
                   get(f_in), get(rec.realized), slack);
    }
  }
  std::fclose(f);
}

}  // namespace gridmpc
