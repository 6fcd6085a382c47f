#include "gridmpc/network_model.hpp"

#include <queue>
#include <sstream>
#include <stdexcept>

#include "gridmpc/rng.hpp"

namespace gridmpc {

namespace {

double map_at(const std::map<std::pair<int, int>, double>& m, int node, int k, const char* what) {
  auto it = m.find({node, k});
  if (it == m.end()) {
    std::ostringstream os;
    os << "forecast missing " << what << " for node " << node << " step " << k;
    throw std::out_of_range(os.str());
  }
  return it->second;
}

}  // namespace

double ForecastSeries::demand_mean_at(int node, int k) const {
  return map_at(demand_mean, node, k, "demand mean");
}
double ForecastSeries::demand_var_at(int node, int k) const {
  return map_at(demand_var, node, k, "demand variance");
}
double ForecastSeries::cap_mean_at(int node, int k) const {
  return map_at(cap_mean, node, k, "capacity mean");
}
double ForecastSeries::cap_var_at(int node, int k) const {
  return map_at(cap_var, node, k, "capacity variance");
}

ValidationReport validate_network(const NetworkModel& model) {
  ValidationReport report;
  auto add = [&report](const std::string& s) { report.issues.push_back(s); };

  if (model.num_nodes < 1) add("network has no nodes");
  if (model.horizon < 1) add("horizon must be >= 1");

  auto valid_node = [&](int i) { return i >= 1 && i <= model.num_nodes; };

  for (const auto& e : model.edges) {
    if (!valid_node(e.first) || !valid_node(e.second)) {
      std::ostringstream os;
      os << "edge (" << e.first << "," << e.second << ") references unknown node";
      add(os.str());
      continue;
    }
    if (e.first == e.second) {
      std::ostringstream os;
      os << "self-loop on node " << e.first;
      add(os.str());
    }
    if (!model.has_edge(e.second, e.first)) {
      std::ostringstream os;
      os << "missing reverse edge (" << e.second << "," << e.first << ")";
      add(os.str());
    }
    if (model.lines.find(e) == model.lines.end()) {
      std::ostringstream os;
      os << "edge (" << e.first << "," << e.second << ") has no line parameters";
      add(os.str());
    }
  }

  // connectivity (BFS from node 1 over the symmetric closure)
  if (model.num_nodes > 1) {
    std::vector<char> seen(static_cast<size_t>(model.num_nodes) + 1, 0);
    std::queue<int> q;
    q.push(1);
    seen[1] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (const auto& e : model.edges) {
        int v = -1;
        if (e.first == u) v = e.second;
        else if (e.second == u) v = e.first;
        if (v >= 1 && v <= model.num_nodes && !seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
    for (int i = 1; i <= model.num_nodes; ++i) {
      if (!seen[i]) {
        std::ostringstream os;
        os << "node " << i << " disconnected";
        add(os.str());
      }
    }
  }

  for (const auto& [i, g] : model.generators) {
    std::ostringstream os;
    os << "generator at node " << i << ": ";
    if (!valid_node(i)) add(os.str() + "unknown node");
    if (!(g.alpha > 0.0)) add(os.str() + "alpha must be > 0");
    if (!(g.p_max > 0.0)) add(os.str() + "p_max must be > 0");
    if (!(g.ramp_lo <= 0.0 && g.ramp_hi >= 0.0)) add(os.str() + "need ramp_lo <= 0 <= ramp_hi");
  }
  for (const auto& [i, s] : model.storages) {
    std::ostringstream os;
    os << "storage at node " << i << ": ";
    if (!valid_node(i)) add(os.str() + "unknown node");
    if (!(s.eff >= 0.0 && s.eff < 1.0)) add(os.str() + "eff must be in [0,1)");
    if (!(s.c > 0.0 && s.d > 0.0)) add(os.str() + "c and d must be > 0");
    if (!(s.e_c_max > 0.0 && s.e_d_max > 0.0 && s.soc_max > 0.0))
      add(os.str() + "rate and capacity bounds must be > 0");
    if (!(s.soc_prev >= 0.0 && s.soc_prev <= s.soc_max))
      add(os.str() + "soc_prev must be in [0, soc_max]");
  }
  for (const auto& [e, lp] : model.lines) {
    if (model.edges.count(e) == 0) {
      std::ostringstream os;
      os << "line parameters for non-edge (" << e.first << "," << e.second << ")";
      add(os.str());
    }
    if (!(lp.f_max > 0.0) || !(lp.varpi > 0.0)) {
      std::ostringstream os;
      os << "line (" << e.first << "," << e.second << "): f_max and varpi must be > 0";
      add(os.str());
    }
  }
  return report;
}

std::vector<int> neighbor_set(const NetworkModel& model, int i) {
  if (i < 1 || i > model.num_nodes) {
    std::ostringstream os;
    os << "unknown node id " << i;
    throw std::out_of_range(os.str());
  }
  std::vector<int> nbrs;
  for (const auto& e : model.edges) {
    if (e.first == i) nbrs.push_back(e.second);
  }
  return nbrs;  // std::set iteration already ascending in e.second for fixed e.first
}

std::map<Edge, LineParams> sample_line_params(std::uint64_t seed, const std::set<Edge>& edges) {
  std::map<Edge, LineParams> out;
  for (const auto& e : edges) {
    std::mt19937_64 eng(rng::substream(seed, static_cast<std::uint64_t>(e.first),
                                       static_cast<std::uint64_t>(e.second)));
    LineParams lp;
    lp.varpi = rng::uniform(eng, 0.1, 0.3);
    lp.nu = rng::uniform(eng, 0.5, 1.0);
    lp.f_max = rng::uniform(eng, 100.0, 400.0);
    out[e] = lp;
  }
  return out;
}

}  // namespace gridmpc
