#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

// Network of interconnected microgrids: graph topology, device parameters
// and demand/capacity forecasts. All types are immutable value types once
// constructed and safe to share read-only across threads.

namespace gridmpc {

using Edge = std::pair<int, int>;  // directed (i,j)

// Dispatchable generation at a node.
struct GeneratorParams {
  double alpha = 0.0;    // quadratic cost coefficient ($/MW^2), > 0
  double omega = 0.0;    // linear cost coefficient ($/MW)
  double p_max = 0.0;    // nameplate capacity (MW)
  double ramp_lo = 0.0;  // per-step ramp lower bound (MW), <= 0
  double ramp_hi = 0.0;  // per-step ramp upper bound (MW), >= 0
  double p_prev = 0.0;   // output applied in the step before the horizon (MW)
};

// Energy storage unit at a node.
struct StorageParams {
  double eff = 0.0;       // leakage per step, in [0,1)
  double c = 1.0;         // charge gain, > 0
  double d = 1.0;         // discharge gain, > 0
  double e_c_max = 0.0;   // charge rate bound (MW)
  double e_d_max = 0.0;   // discharge rate bound (MW)
  double soc_max = 0.0;   // capacity (MWh)
  double soc_prev = 0.0;  // state of charge entering the horizon (MWh)
  double upsilon = 0.0;   // charge cost coefficient
  double varsigma = 0.0;  // discharge cost coefficient
};

// Directed transmission line parameters; (i,j) and (j,i) carry independent
// values (costs and caps may differ per direction).
struct LineParams {
  double f_max = 0.0;  // transmission capacity (MW), > 0
  double varpi = 0.0;  // quadratic cost coefficient, > 0
  double nu = 0.0;     // linear cost coefficient
};

struct NetworkModel {
  int num_nodes = 0;  // node ids are 1..num_nodes
  std::set<Edge> edges;
  std::map<int, GeneratorParams> generators;
  std::map<int, StorageParams> storages;
  std::map<Edge, LineParams> lines;
  int horizon = 1;           // K, number of steps
  double sample_time = 1.0;  // T, hours

  bool has_edge(int i, int j) const { return edges.count({i, j}) > 0; }
  bool has_generator(int i) const { return generators.count(i) > 0; }
  bool has_storage(int i) const { return storages.count(i) > 0; }
};

// Demand/capacity first and second moments over the horizon, plus the
// chance level. Keys are (node, k) with k in [0, K-1].
struct ForecastSeries {
  int horizon = 1;
  double epsilon = 0.25;  // chance level, in (0,1)
  std::map<std::pair<int, int>, double> demand_mean;
  std::map<std::pair<int, int>, double> demand_var;
  std::map<std::pair<int, int>, double> cap_mean;  // generator nodes only
  std::map<std::pair<int, int>, double> cap_var;

  double demand_mean_at(int node, int k) const;
  double demand_var_at(int node, int k) const;
  double cap_mean_at(int node, int k) const;
  double cap_var_at(int node, int k) const;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

// Structural checks: symmetric edge set, connected graph, parameter sanity,
// device maps referencing valid nodes. Findings are reported, not thrown.
ValidationReport validate_network(const NetworkModel& model);

// {j : (i,j) in edges}, ascending. Throws std::out_of_range on unknown id.
std::vector<int> neighbor_set(const NetworkModel& model, int i);

// Draws line parameters for every directed edge: varpi in [0.1,0.3],
// nu in [0.5,1.0], f_max in [100,400]. Each edge gets its own mt19937_64
// substream derived from (seed, i, j), so the result is a pure function of
// (seed, edges) independent of edge iteration order; symmetric pairs are
// sampled independently.
std::map<Edge, LineParams> sample_line_params(std::uint64_t seed, const std::set<Edge>& edges);

}  // namespace gridmpc
