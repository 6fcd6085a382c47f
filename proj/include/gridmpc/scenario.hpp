#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridmpc/network_model.hpp"
#include "gridmpc/problem_builder.hpp"

// Scenario files: one self-contained JSON document with sections
// {network, generators, storage, lines | line_seed, forecast, mpc}.
// Demand forecasts come either as explicit (node, step) tables or as a rule
// (base profile + per-node offset), which the receding-horizon engine
// re-evaluates at every new window.

namespace gridmpc {

struct ScenarioParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DemandRule {
  std::vector<double> profile;  // base profile D(t), indexed by absolute step
  double offset_amp = 10.0;     // per-node additive term offset_amp * ((i + t) mod offset_mod)
  int offset_mod = 5;
  double variance = 10.0;
  bool wrap = true;  // profile index wraps around; otherwise clamps at the last entry
};

struct Scenario {
  NetworkModel model;
  double epsilon = 0.25;
  std::optional<DemandRule> demand_rule;
  // explicit tables, keyed by (node, absolute step); used when no rule given
  std::map<std::pair<int, int>, double> demand_mean;
  std::map<std::pair<int, int>, double> demand_var;
  // optional capacity tables; default is mean = p_max, variance = 0
  std::map<std::pair<int, int>, double> cap_mean;
  std::map<std::pair<int, int>, double> cap_var;
  std::optional<std::uint64_t> line_seed;
  int mpc_steps = 12;

  // K-step window starting at absolute time t0
  ForecastSeries forecast_at(int t0) const;
};

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& scenario, const std::string& path);

// The modified IEEE 30-bus benchmark with the standard 41-branch edge set:
// ten generators, six storage units, the 12-entry base demand profile with
// the per-node offset rule, epsilon = 0.25, T = 1 h, line parameters drawn
// from the seed. Generators start at half capacity and storage at half
// charge.
Scenario make_benchmark_scenario(std::uint64_t seed, int K);

// Per-agent series in the layout [P | E_c | E_d | F-by-neighbor].
void write_solution_json(const CompactProblem& problem, const Eigen::VectorXd& x,
                         const std::string& method, bool converged, int iterations, double cost,
                         const std::string& path);

// Reads a solution back into the stacked layout of `problem`; throws
// ScenarioParseError when the file does not match the problem shape.
Eigen::VectorXd read_solution_json(const CompactProblem& problem, const std::string& path);

}  // namespace gridmpc
