#include "gridmpc/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gridmpc {

namespace {

constexpr long kHeaderBytes = 24;  // from, to, round as 8-byte fields

long payload_bytes(const Message& msg) {
  return kHeaderBytes + 8 * (static_cast<long>(msg.vec.size()) + static_cast<long>(msg.vec2.size()));
}

}  // namespace

std::map<int, std::vector<Message>> round_exchange(const NetworkModel& model,
                                                   const std::vector<Message>& outbox,
                                                   long round, RoundLog& log) {
  RoundRecord rec;
  rec.round = round;
  std::map<int, std::vector<Message>> inbox;
  for (const auto& msg : outbox) {
    if (msg.from != msg.to && !model.has_edge(msg.from, msg.to)) {
      log.fault = true;
      log.delivered[{msg.from, msg.to}] += 1;
      std::ostringstream os;
      os << "protocol fault: message from " << msg.from << " to non-neighbor " << msg.to
         << " in round " << round;
      throw ProtocolFault(os.str());
    }
    log.delivered[{msg.from, msg.to}] += 1;
    rec.messages += 1;
    rec.bytes += payload_bytes(msg);
    inbox[msg.to].push_back(msg);
  }
  for (auto& [to, msgs] : inbox) {
    std::stable_sort(msgs.begin(), msgs.end(),
                     [](const Message& a, const Message& b) { return a.from < b.from; });
  }
  log.total_messages += rec.messages;
  log.total_bytes += rec.bytes;
  log.rounds.push_back(rec);
  return inbox;
}

bool locality_audit(const NetworkModel& model, const RoundLog& log) {
  if (log.fault) return false;
  for (const auto& [pair, count] : log.delivered) {
    if (count <= 0) continue;
    if (pair.first == pair.second) continue;
    if (!model.has_edge(pair.first, pair.second)) return false;
  }
  return true;
}

void write_round_log_csv(const RoundLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open round log file: " + path);
  std::fprintf(f, "round,messages,bytes\n");
  for (const auto& rec : log.rounds) {
    std::fprintf(f, "%ld,%ld,%ld\n", rec.round, rec.messages, rec.bytes);
  }
  std::fclose(f);
}

ProtocolDualResult run_protocol_dual(const NetworkModel& model, const CompactProblem& problem,
                                     const DualAscentConfig& config) {
  ProtocolDualResult out;
  DualAscentResult& res = out.result;
  const double L = config.lipschitz > 0.0 ? config.lipschitz : lipschitz_bound(problem);
  if (!(L > 0.0)) throw std::invalid_argument("run_protocol_dual: nonpositive Lipschitz constant");
  res.lipschitz_used = L;
  res.trace.has_reference = config.reference != nullptr;

  DualIterate it = config.warm_start ? *config.warm_start : zero_dual_iterate(problem);
  double prev_psi = -std::numeric_limits<double>::infinity();
  res.max_ascent_violation = -std::numeric_limits<double>::infinity();
  long round = 0;

  for (int s = 0; s < config.max_iters; ++s) {
    // round A: every agent shares its zeta with its neighbors
    std::vector<Message> outbox;
    for (int i : problem.nodes) {
      for (int j : problem.local(i).nbrs) {
        Message msg;
        msg.from = i;
        msg.to = j;
        msg.round = round;
        msg.kind = PayloadKind::kZetaShare;
        msg.vec = it.zeta.at(i);
        outbox.push_back(std::move(msg));
      }
    }
    auto inbox = round_exchange(model, outbox, round, out.log);
    ++round;

    // (22a) with neighbor zetas taken from the inbox (sorted by sender,
    // which matches the ascending neighbor order of the local problem)
    for (int i : problem.nodes) {
      const auto& lp = problem.local(i);
      std::vector<const Eigen::VectorXd*> zeta_nbrs;
      zeta_nbrs.reserve(lp.nbrs.size());
      for (const auto& msg : inbox[i]) zeta_nbrs.push_back(&msg.vec);
      it.x_star[i] = local_primal_argmin(lp, it.lambda.at(i), it.zeta.at(i), zeta_nbrs);
    }

    // round B: flow contributions B_ij x_i^* toward each neighbor's balance
    outbox.clear();
    for (int i : problem.nodes) {
      const auto& lp = problem.local(i);
      for (int j : lp.nbrs) {
        Message msg;
        msg.from = i;
        msg.to = j;
        msg.round = round;
        msg.kind = PayloadKind::kFlowShare;
        msg.vec = flow_contribution(lp, j, it.x_star.at(i));
        outbox.push_back(std::move(msg));
      }
    }
    inbox = round_exchange(model, outbox, round, out.log);
    ++round;

    DualGradient g;
    for (int i : problem.nodes) {
      const auto& lp = problem.local(i);
      g.g_lambda[i] = lambda_gradient(lp, it.x_star.at(i));
      std::vector<const Eigen::VectorXd*> contribs;
      contribs.reserve(lp.nbrs.size());
      for (const auto& msg : inbox[i]) contribs.push_back(&msg.vec);
      g.g_zeta[i] = zeta_gradient(lp, it.x_star.at(i), contribs);
    }

    const auto tail = dual_iteration_tail(problem, it, g, L, config,
                                          config.record_trace ? &res.trace : nullptr, s);
    res.final_infeas = tail.infeas;
    if (s > 0) res.max_ascent_violation = std::max(res.max_ascent_violation, prev_psi - tail.psi);
    prev_psi = tail.psi;
    if (tail.stop) {
      res.converged = true;
      break;
    }
  }
  res.iterations = it.iter;

  // final zeta round so recovery only uses received values
  std::vector<Message> outbox;
  for (int i : problem.nodes) {
    for (int j : problem.local(i).nbrs) {
      Message msg;
      msg.from = i;
      msg.to = j;
      msg.round = round;
      msg.kind = PayloadKind::kZetaShare;
      msg.vec = it.zeta.at(i);
      outbox.push_back(std::move(msg));
    }
  }
  auto inbox = round_exchange(model, outbox, round, out.log);
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    std::vector<const Eigen::VectorXd*> zeta_nbrs;
    zeta_nbrs.reserve(lp.nbrs.size());
    for (const auto& msg : inbox[i]) zeta_nbrs.push_back(&msg.vec);
    it.x_star[i] = local_primal_argmin(lp, it.lambda.at(i), it.zeta.at(i), zeta_nbrs);
  }
  res.x = stack_x(problem, it.x_star);
  res.iterate = std::move(it);
  if (!std::isfinite(res.max_ascent_violation)) res.max_ascent_violation = 0.0;
  return out;
}

ProtocolAdmmResult run_protocol_admm(const NetworkModel& model, const CompactProblem& problem,
                                     const AdmmConfig& config) {
  if (!(config.rho > 0.0)) throw std::invalid_argument("run_protocol_admm: rho must be > 0");
  ProtocolAdmmResult out;
  AdmmResult& res = out.result;
  const double rho = config.rho;
  const auto locals = build_admm_locals(problem, rho);

  res.trace.has_reference = config.reference != nullptr;
  AdmmIterate it = config.warm_start ? *config.warm_start : zero_admm_iterate(problem);
  long round = 0;

  for (int s = 0; s < config.max_iters; ++s) {
    // one consensus share per directed edge: own shifted S and R estimates
    std::map<Edge, Eigen::VectorXd> s_shift, r_shift;
    std::vector<Message> outbox;
    for (int i : problem.nodes) {
      const auto& loc = locals.at(i);
      for (int j : loc.nbrs) {
        Eigen::VectorXd s_own = consensus_s_shift(loc, j, it.u.at(i), it.mu1.at({i, j}), rho);
        Eigen::VectorXd r_own = consensus_r_shift(loc, j, it.u.at(i), it.mu2.at({i, j}), rho);
        Message msg;
        msg.from = i;
        msg.to = j;
        msg.round = round;
        msg.kind = PayloadKind::kConsensusShare;
        msg.vec = s_own;
        msg.vec2 = r_own;
        outbox.push_back(std::move(msg));
        s_shift[{i, j}] = std::move(s_own);
        r_shift[{i, j}] = std::move(r_own);
      }
    }
    auto inbox = round_exchange(model, outbox, round, out.log);
    ++round;
    // neighbor estimates arrive by message; own ones were kept above
    for (int i : problem.nodes) {
      for (const auto& msg : inbox[i]) {
        s_shift[{msg.from, i}] = msg.vec;
        r_shift[{msg.from, i}] = msg.vec2;
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
  return out;
}

}  // namespace gridmpc
