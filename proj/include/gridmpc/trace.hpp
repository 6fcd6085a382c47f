#pragma once

#include <string>
#include <vector>

namespace gridmpc {

// One per-iteration record shared by every solver. dual_value is NaN where
// the method does not track one (ADMM); dist_to_ref is NaN unless a
// reference vector was supplied.
struct SolveTraceRow {
  int iter = 0;
  double cost = 0.0;
  double primal_infeas = 0.0;
  double consensus_resid = 0.0;
  double dual_value = 0.0;
  double dist_to_ref = 0.0;
};

struct SolveTrace {
  std::vector<SolveTraceRow> rows;
  bool has_reference = false;
};

// Header: iter,cost,primal_infeas,consensus_resid,dual_value[,dist_to_ref].
// The dist column is emitted only when the trace carries a reference.
// Floating-point fields use 17 significant digits.
void write_trace_csv(const SolveTrace& trace, const std::string& path);

}  // namespace gridmpc
