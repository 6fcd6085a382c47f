#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridmpc/admm.hpp"
#include "gridmpc/dual_ascent.hpp"
#include "gridmpc/network_model.hpp"

// Synchronous message-passing execution of either solver. Agents only ever
// read their own local problem and messages originating from neighbors; the
// exchange validates every (from,to) pair against the edge set and keeps a
// delivery ledger for auditing. Results are bit-identical to the monolithic
// solver runs: the same per-agent kernels run in the same order, fed by
// inboxes instead of direct state reads.

namespace gridmpc {

struct ProtocolFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PayloadKind {
  kZetaShare,       // dual ascent: zeta_i for the neighbor's argmin
  kFlowShare,       // dual ascent: B_ij x_i^*, the flow entering j's balance
  kConsensusShare,  // ADMM: the two shifted estimates for (26b)-(26c)
};

struct Message {
  int from = 0;
  int to = 0;
  long round = 0;
  PayloadKind kind = PayloadKind::kZetaShare;
  Eigen::VectorXd vec;
  Eigen::VectorXd vec2;  // second payload for consensus shares
};

struct RoundRecord {
  long round = 0;
  long messages = 0;
  long bytes = 0;
};

struct RoundLog {
  std::vector<RoundRecord> rounds;
  std::map<std::pair<int, int>, long> delivered;  // (from,to) -> count
  long total_messages = 0;
  long total_bytes = 0;
  bool fault = false;
};

// Delivers one round of messages. Returns per-recipient inboxes ordered by
// sender id. A message addressed to a non-neighbor aborts the run with
// ProtocolFault after marking the log.
std::map<int, std::vector<Message>> round_exchange(const NetworkModel& model,
                                                   const std::vector<Message>& outbox,
                                                   long round, RoundLog& log);

// Pass iff no fault was recorded and every delivery pairs an agent with
// itself or one of its neighbors.
bool locality_audit(const NetworkModel& model, const RoundLog& log);

// CSV schema: round,messages,bytes.
void write_round_log_csv(const RoundLog& log, const std::string& path);

struct ProtocolDualResult {
  DualAscentResult result;
  RoundLog log;
};
ProtocolDualResult run_protocol_dual(const NetworkModel& model, const CompactProblem& problem,
                                     const DualAscentConfig& config);

struct ProtocolAdmmResult {
  AdmmResult result;
  RoundLog log;
};
ProtocolAdmmResult run_protocol_admm(const NetworkModel& model, const CompactProblem& problem,
                                     const AdmmConfig& config);

}  // namespace gridmpc
