#include "gridmpc/trace.hpp"

#include <cstdio>
#include <stdexcept>

namespace gridmpc {

void write_trace_csv(const SolveTrace& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open trace file: " + path);
  if (trace.has_reference) {
    std::fprintf(f, "iter,cost,primal_infeas,consensus_resid,dual_value,dist_to_ref\n");
  } else {
    std::fprintf(f, "iter,cost,primal_infeas,consensus_resid,dual_value\n");
  }
  for (const auto& r : trace.rows) {
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g", r.iter, r.cost, r.primal_infeas,
                 r.consensus_resid, r.dual_value);
    if (trace.has_reference) std::fprintf(f, ",%.17g", r.dist_to_ref);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

}  // namespace gridmpc
