#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gridmpc/admm.hpp"
#include "gridmpc/dual_ascent.hpp"
#include "gridmpc/network_model.hpp"
#include "gridmpc/problem_builder.hpp"

// Receding-horizon loop: solve the K-step problem, apply the first-step
// controls, advance the plant, shift the forecast window, repeat.

namespace gridmpc {

struct PlantState {
  std::map<int, double> soc;     // storage nodes
  std::map<int, double> p_prev;  // generator nodes
  int t = 0;
};

PlantState initial_plant_state(const NetworkModel& model);

// Writes the plant state into the parameter fields consumed by the builder.
NetworkModel apply_plant_state(const NetworkModel& model, const PlantState& state);

struct StepPlantResult {
  PlantState next;
  std::map<int, double> slack;  // realized balance surplus per node
  std::vector<std::string> warnings;
  bool soc_clamped = false;
};

// Storage dynamics soc' = (1-eff) soc + c E_c - d E_d; a resulting state
// outside [0, soc_max] signals model mismatch and is clamped with a warning.
StepPlantResult step_plant(const NetworkModel& model, const PlantState& state,
                           const AppliedControls& controls,
                           const std::map<int, double>& realized_demand);

// Gaussian draw per node with mean demand_mean(i,k) and standard deviation
// sqrt(demand_var(i,k)), truncated at 0. Each (node,k) pair uses its own
// mt19937_64 substream of the seed, so draws are reproducible and
// independent of iteration order.
std::map<int, double> sample_realized_demand(const ForecastSeries& forecast, std::uint64_t seed,
                                             int k);

enum class MpcSolverKind { kDualAscent, kAdmm };

struct MpcConfig {
  int steps = 12;
  MpcSolverKind solver = MpcSolverKind::kAdmm;
  DualAscentConfig dual;
  AdmmConfig admm;
  bool realized_expectation = false;  // realized demand = mean instead of a draw
  std::uint64_t seed = 0;
};

struct MpcStepRecord {
  int step = 0;
  AppliedControls applied;
  std::map<int, double> realized;
  std::map<int, double> slack;
  int iterations = 0;
  bool converged = false;
  bool soc_clamped = false;
};

struct MpcLog {
  std::vector<MpcStepRecord> steps;
  bool completed = true;
  std::string failure;
};

// Forecast window for the K steps starting at absolute time t0.
using ForecastProvider = std::function<ForecastSeries(int t0)>;

// Solver non-convergence at any step halts the run; the partial log is
// returned with completed = false.
MpcLog run_receding_horizon(const NetworkModel& model, const ForecastProvider& forecasts,
                            const MpcConfig& config);

// CSV schema: step,node,P,E_c,E_d,F_out,F_in,realized_demand,slack
// (F_out/F_in are the summed outgoing/incoming flows applied at that step).
void write_mpc_csv(const MpcLog& log, const std::string& path);

}  // namespace gridmpc
