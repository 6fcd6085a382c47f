#include <doctest.h>

#include "gridmpc/harness.hpp"
#include "gridmpc/scenario.hpp"
#include "test_support.hpp"

using namespace gridmpc;
using gridmpc::testing::random_forecast;
using gridmpc::testing::random_model;
using gridmpc::testing::tiny_case;

namespace {

NetworkModel path3() {
  NetworkModel m;
  m.num_nodes = 3;
  m.horizon = 1;
  m.edges = {{1, 2}, {2, 1}, {2, 3}, {3, 2}};
  m.lines = sample_line_params(1, m.edges);
  return m;
}

Message make_msg(int from, int to, long round) {
  Message msg;
  msg.from = from;
  msg.to = to;
  msg.round = round;
  msg.vec = Eigen::VectorXd::Ones(2);
  return msg;
}

}  // namespace

TEST_CASE("round_exchange delivers between neighbors") {
  const auto m = path3();
  RoundLog log;
  const auto inbox = round_exchange(m, {make_msg(1, 2, 0)}, 0, log);
  REQUIRE(inbox.count(2) == 1);
  CHECK(inbox.at(2).size() == 1);
  CHECK(log.total_messages == 1);
  CHECK(log.total_bytes == 24 + 16);
  CHECK(locality_audit(m, log));
}

TEST_CASE("round_exchange faults on a non-neighbor message") {
  const auto m = path3();
  RoundLog log;
  CHECK_THROWS_AS(round_exchange(m, {make_msg(1, 3, 0)}, 0, log), ProtocolFault);
  CHECK(log.fault);
  CHECK_FALSE(locality_audit(m, log));
}

TEST_CASE("round_exchange with empty outboxes advances the round") {
  const auto m = path3();
  RoundLog log;
  const auto inbox = round_exchange(m, {}, 7, log);
  CHECK(inbox.empty());
  REQUIRE(log.rounds.size() == 1);
  CHECK(log.rounds[0].round == 7);
  CHECK(log.rounds[0].messages == 0);
}

TEST_CASE("locality_audit passes on an empty log and fails on an injected pair") {
  const auto m = path3();
  RoundLog log;
  CHECK(locality_audit(m, log));
  log.delivered[{1, 3}] = 1;  // injected non-neighbor read
  CHECK_FALSE(locality_audit(m, log));
}

TEST_CASE("dual-ascent protocol run bit-matches the monolithic solver") {
  const auto model = random_model(91);
  const auto problem = build_compact(model, random_forecast(model, 91));
  DualAscentConfig config;
  config.max_iters = 100;
  config.tol_grad = 0.0;  // force the full 100 iterations

  const auto mono = run_dual_ascent(problem, config);
  const auto proto = run_protocol_dual(model, problem, config);

  CHECK((mono.x - proto.result.x).lpNorm<Eigen::Infinity>() == 0.0);
  for (int i : problem.nodes) {
    CHECK((mono.iterate.lambda.at(i) - proto.result.iterate.lambda.at(i)).lpNorm<Eigen::Infinity>() ==
          0.0);
    CHECK((mono.iterate.zeta.at(i) - proto.result.iterate.zeta.at(i)).lpNorm<Eigen::Infinity>() ==
          0.0);
  }
  REQUIRE(mono.trace.rows.size() == proto.result.trace.rows.size());
  for (size_t r = 0; r < mono.trace.rows.size(); ++r) {
    CHECK(mono.trace.rows[r].cost == proto.result.trace.rows[r].cost);
    CHECK(mono.trace.rows[r].dual_value == proto.result.trace.rows[r].dual_value);
    CHECK(mono.trace.rows[r].primal_infeas == proto.result.trace.rows[r].primal_infeas);
  }
  CHECK(locality_audit(model, proto.log));
}

TEST_CASE("admm protocol run bit-matches the monolithic solver") {
  const auto model = random_model(92);
  const auto problem = build_compact(model, random_forecast(model, 92));
  AdmmConfig config;
  config.rho = 0.3;
  config.max_iters = 100;
  config.tol = 0.0;  // force the full 100 iterations

  const auto mono = run_admm(problem, config);
  const auto proto = run_protocol_admm(model, problem, config);

  CHECK((mono.x - proto.result.x).lpNorm<Eigen::Infinity>() == 0.0);
  for (int i : problem.nodes) {
    CHECK((mono.iterate.u.at(i) - proto.result.iterate.u.at(i)).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((mono.iterate.v.at(i) - proto.result.iterate.v.at(i)).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((mono.iterate.mu.at(i) - proto.result.iterate.mu.at(i)).lpNorm<Eigen::Infinity>() ==
          0.0);
    for (int j : problem.local(i).nbrs) {
      CHECK((mono.iterate.v1.at({i, j}) - proto.result.iterate.v1.at({i, j}))
                .lpNorm<Eigen::Infinity>() == 0.0);
      CHECK((mono.iterate.mu2.at({i, j}) - proto.result.iterate.mu2.at({i, j}))
                .lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  CHECK(locality_audit(model, proto.log));
}

TEST_CASE("message complexity per iteration matches the update structure") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  const long directed_edges = static_cast<long>(tc.model.edges.size());

  DualAscentConfig dc;
  dc.max_iters = 5;
  dc.tol_grad = 0.0;
  const auto dual = run_protocol_dual(tc.model, problem, dc);
  // two rounds per iteration (zeta share + flow share) plus one recovery round
  REQUIRE(dual.log.rounds.size() == 2 * 5 + 1);
  for (const auto& rec : dual.log.rounds) CHECK(rec.messages == directed_edges);

  AdmmConfig ac;
  ac.max_iters = 5;
  ac.tol = 0.0;
  const auto admm = run_protocol_admm(tc.model, problem, ac);
  REQUIRE(admm.log.rounds.size() == 5);
  for (const auto& rec : admm.log.rounds) CHECK(rec.messages == directed_edges);
}

TEST_CASE("a single-agent network exchanges no messages") {
  NetworkModel m;
  m.num_nodes = 1;
  m.horizon = 1;
  GeneratorParams g;
  g.alpha = 1.0;
  g.omega = 1.0;
  g.p_max = 100.0;
  g.ramp_lo = -100.0;
  g.ramp_hi = 100.0;
  g.p_prev = 50.0;
  m.generators[1] = g;
  ForecastSeries fs;
  fs.horizon = 1;
  fs.epsilon = 0.25;
  fs.demand_mean[{1, 0}] = 10.0;
  fs.demand_var[{1, 0}] = 0.0;
  fs.cap_mean[{1, 0}] = 100.0;
  fs.cap_var[{1, 0}] = 0.0;
  const auto problem = build_compact(m, fs);

  DualAscentConfig dc;
  dc.max_iters = 50;
  const auto dual = run_protocol_dual(m, problem, dc);
  CHECK(dual.log.total_messages == 0);

  AdmmConfig ac;
  ac.rho = 0.5;
  ac.max_iters = 20000;
  const auto admm = run_protocol_admm(m, problem, ac);
  CHECK(admm.log.total_messages == 0);
  CHECK(locality_audit(m, admm.log));
}

TEST_CASE("round log CSV schema") {
  const auto tc = tiny_case();
  const auto problem = build_compact(tc.model, tc.forecast);
  DualAscentConfig dc;
  dc.max_iters = 2;
  dc.tol_grad = 0.0;
  const auto run = run_protocol_dual(tc.model, problem, dc);
  const std::string path = "round_log_test.csv";
  write_round_log_csv(run.log, path);
  std::FILE* f = std::fopen(path.c_str(), "r");
  REQUIRE(f);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f));
  CHECK(std::string(line) == "round,messages,bytes\n");
  std::fclose(f);
  std::remove(path.c_str());
}
