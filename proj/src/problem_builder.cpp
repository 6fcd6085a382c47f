#include "gridmpc/problem_builder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gridmpc {

namespace {

double tighten_coeff(double epsilon) {
  return std::sqrt((1.0 - epsilon) / epsilon);
}

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("epsilon must be in (0,1)");
  }
}

}  // namespace

int LocalProblem::nbr_pos(int j) const {
  auto it = std::lower_bound(nbrs.begin(), nbrs.end(), j);
  if (it == nbrs.end() || *it != j) {
    std::ostringstream os;
    os << "node " << j << " is not a neighbor of node " << node;
    throw std::out_of_range(os.str());
  }
  return static_cast<int>(it - nbrs.begin());
}

std::map<std::pair<int, int>, double> tighten_demand(const ForecastSeries& forecast) {
  check_epsilon(forecast.epsilon);
  const double coeff = tighten_coeff(forecast.epsilon);
  std::map<std::pair<int, int>, double> out;
  for (const auto& [key, mean] : forecast.demand_mean) {
    out[key] = mean + coeff * forecast.demand_var_at(key.first, key.second);
  }
  return out;
}

std::map<std::pair<int, int>, double> tighten_capacity(const ForecastSeries& forecast,
                                                       std::vector<std::string>* warnings) {
  check_epsilon(forecast.epsilon);
  const double coeff = tighten_coeff(forecast.epsilon);
  std::map<std::pair<int, int>, double> out;
  for (const auto& [key, mean] : forecast.cap_mean) {
    double v = mean - coeff * forecast.cap_var_at(key.first, key.second);
    if (v < 0.0) {
      if (warnings) {
        std::ostringstream os;
        os << "tightened capacity for node " << key.first << " step " << key.second
           << " is negative (" << v << "); clamped to 0";
        warnings->push_back(os.str());
      }
      v = 0.0;
    }
    out[key] = v;
  }
  return out;
}

TightenedForecast tighten_forecast(const ForecastSeries& forecast) {
  TightenedForecast tf;
  tf.d_tilde = tighten_demand(forecast);
  tf.p_tilde = tighten_capacity(forecast, &tf.warnings);
  return tf;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_generator_block(
    const GeneratorParams& g, int K, const std::vector<double>& p_tilde_row) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (static_cast<int>(p_tilde_row.size()) != K)
    throw std::invalid_argument("p_tilde_row must have K entries");

  const int rows = 4 * K - 2;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, K);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(rows);

  // upper bounds: P(k) <= P~(k), step 0 also capped by the ramp from p_prev
  for (int k = 0; k < K; ++k) {
    A(k, k) = 1.0;
    a(k) = (k == 0) ? std::min(p_tilde_row[0], g.p_prev + g.ramp_hi) : p_tilde_row[k];
  }
  // lower bounds: P(k) >= 0, step 0 also floored by the downward ramp
  for (int k = 0; k < K; ++k) {
    A(K + k, k) = -1.0;
    a(K + k) = (k == 0) ? -std::max(0.0, g.p_prev + g.ramp_lo) : 0.0;
  }
  // ramp differences between consecutive steps
  for (int k = 0; k + 1 < K; ++k) {
    A(2 * K + k, k) = -1.0;
    A(2 * K + k, k + 1) = 1.0;
    a(2 * K + k) = g.ramp_hi;

    A(3 * K - 1 + k, k) = 1.0;
    A(3 * K - 1 + k, k + 1) = -1.0;
    a(3 * K - 1 + k) = -g.ramp_lo;
  }
  return {A, a};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_storage_block(const StorageParams& s, int K) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");

  const int rows = 6 * K;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, 2 * K);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(rows);

  // rate bounds
  for (int k = 0; k < K; ++k) {
    A(k, k) = 1.0;
    a(k) = s.e_c_max;
    A(K + k, K + k) = 1.0;
    a(K + k) = s.e_d_max;
    A(2 * K + k, k) = -1.0;
    A(3 * K + k, K + k) = -1.0;
  }
  // state-of-charge rows; gain accumulates the leakage geometric series
  double gain = 0.0;
  double leak_pow = 1.0;  // (1-eff)^kappa
  for (int k = 0; k < K; ++k) {
    gain += leak_pow;      // sum_{m=0}^{k} (1-eff)^m
    leak_pow *= (1.0 - s.eff);
    const double cg = s.c * gain;
    const double dg = s.d * gain;
    A(4 * K + k, k) = cg;
    A(4 * K + k, K + k) = -dg;
    a(4 * K + k) = s.soc_max - leak_pow * s.soc_prev;
    A(5 * K + k, k) = -cg;
    A(5 * K + k, K + k) = dg;
    a(5 * K + k) = leak_pow * s.soc_prev;
  }
  return {A, a};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble_flow_block(
    const std::vector<LineParams>& lines_by_nbr, int K) {
  const int deg = static_cast<int>(lines_by_nbr.size());
  if (deg < 1) throw std::invalid_argument("flow block needs at least one neighbor");
  const int cols = K * deg;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * cols, cols);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2 * cols);
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < deg; ++t) {
      const int col = k * deg + t;
      A(col, col) = 1.0;
      a(col) = lines_by_nbr[static_cast<size_t>(t)].f_max;
      A(cols + col, col) = -1.0;
    }
  }
  return {A, a};
}

CouplingBlock assemble_coupling(const NetworkModel& model,
                                const std::map<std::pair<int, int>, double>& d_tilde, int i,
                                int K) {
  CouplingBlock cb;
  const auto nbrs = neighbor_set(model, i);
  const int deg = static_cast<int>(nbrs.size());
  const bool has_gen = model.has_generator(i);
  const bool has_store = model.has_storage(i);
  const int n = (has_gen ? K : 0) + (has_store ? 2 * K : 0) + K * deg;
  const int f_off = (has_gen ? K : 0) + (has_store ? 2 * K : 0);

  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < K; ++k) {
    if (has_gen) trips.emplace_back(k, k, -1.0);
    if (has_store) {
      const int ec = (has_gen ? K : 0);
      trips.emplace_back(k, ec + k, 1.0);
      trips.emplace_back(k, ec + K + k, -1.0);
    }
    for (int t = 0; t < deg; ++t) trips.emplace_back(k, f_off + k * deg + t, 1.0);
  }
  cb.B_self = SpMat(K, n);
  cb.B_self.setFromTriplets(trips.begin(), trips.end());

  for (int t = 0; t < deg; ++t) {
    std::vector<Eigen::Triplet<double>> bt;
    for (int k = 0; k < K; ++k) bt.emplace_back(k, f_off + k * deg + t, -1.0);
    SpMat B(K, n);
    B.setFromTriplets(bt.begin(), bt.end());
    cb.B_out[nbrs[static_cast<size_t>(t)]] = std::move(B);
  }

  cb.b = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    auto it = d_tilde.find({i, k});
    if (it == d_tilde.end()) {
      std::ostringstream os;
      os << "tightened demand missing for node " << i << " step " << k;
      throw std::out_of_range(os.str());
    }
    cb.b(k) = -it->second;
  }
  return cb;
}

CompactProblem build_compact(const NetworkModel& model, const ForecastSeries& forecast) {
  auto report = validate_network(model);
  if (!report.ok()) {
    std::ostringstream os;
    os << "invalid model: " << report.issues.front();
    if (report.issues.size() > 1) os << " (and " << report.issues.size() - 1 << " more)";
    throw std::invalid_argument(os.str());
  }
  if (forecast.horizon < model.horizon) {
    throw std::out_of_range("forecast horizon shorter than model horizon");
  }

  const int K = model.horizon;
  const auto tf = tighten_forecast(forecast);

  CompactProblem problem;
  problem.K = K;
  problem.sigma_min = std::numeric_limits<double>::infinity();
  problem.l_max = 0.0;

  for (int i = 1; i <= model.num_nodes; ++i) {
    LocalProblem lp;
    lp.node = i;
    lp.K = K;
    lp.has_gen = model.has_generator(i);
    lp.has_store = model.has_storage(i);
    lp.nbrs = neighbor_set(model, i);
    const int deg = lp.num_nbrs();
    lp.n = (lp.has_gen ? K : 0) + (lp.has_store ? 2 * K : 0) + K * deg;
    lp.m = (lp.has_gen ? 4 * K - 2 : 0) + (lp.has_store ? 6 * K : 0) + 2 * K * deg;

    // local rows
    std::vector<Eigen::Triplet<double>> trips;
    lp.a = Eigen::VectorXd::Zero(lp.m);
    int row = 0;
    auto scatter = [&trips, &row, &lp](const Eigen::MatrixXd& blockA, const Eigen::VectorXd& blocka,
                                       int col0) {
      for (int r = 0; r < blockA.rows(); ++r) {
        for (int c = 0; c < blockA.cols(); ++c) {
          if (blockA(r, c) != 0.0) trips.emplace_back(row + r, col0 + c, blockA(r, c));
        }
        lp.a(row + r) = blocka(r);
      }
      row += static_cast<int>(blockA.rows());
    };

    if (lp.has_gen) {
      std::vector<double> ptr(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k) ptr[static_cast<size_t>(k)] = tf.p_tilde.at({i, k});
      auto [Ag, ag] = assemble_generator_block(model.generators.at(i), K, ptr);
      scatter(Ag, ag, lp.p_offset());
    }
    if (lp.has_store) {
      auto [Ae, ae] = assemble_storage_block(model.storages.at(i), K);
      scatter(Ae, ae, lp.ec_offset());
    }
    if (deg > 0) {
      std::vector<LineParams> lines;
      lines.reserve(static_cast<size_t>(deg));
      for (int j : lp.nbrs) lines.push_back(model.lines.at({i, j}));
      auto [Af, af] = assemble_flow_block(lines, K);
      scatter(Af, af, lp.f_offset());
    }
    lp.A = SpMat(lp.m, lp.n);
    lp.A.setFromTriplets(trips.begin(), trips.end());

    auto cb = assemble_coupling(model, tf.d_tilde, i, K);
    lp.B_self = std::move(cb.B_self);
    lp.B_out = std::move(cb.B_out);
    lp.b = std::move(cb.b);

    // separable quadratic cost
    lp.cost_quad = Eigen::VectorXd::Zero(lp.n);
    lp.cost_lin = Eigen::VectorXd::Zero(lp.n);
    if (lp.has_gen) {
      const auto& g = model.generators.at(i);
      for (int k = 0; k < K; ++k) {
        lp.cost_quad(lp.p_index(k)) = g.alpha;
        lp.cost_lin(lp.p_index(k)) = g.omega;
      }
    }
    if (lp.has_store) {
      const auto& s = model.storages.at(i);
      for (int k = 0; k < K; ++k) {
        lp.cost_quad(lp.ec_index(k)) = s.upsilon;
        lp.cost_quad(lp.ed_index(k)) = s.varsigma;
      }
    }
    for (int t = 0; t < deg; ++t) {
      const auto& line = model.lines.at({i, lp.nbrs[static_cast<size_t>(t)]});
      for (int k = 0; k < K; ++k) {
        lp.cost_quad(lp.f_index(k, t)) = line.varpi;
        lp.cost_lin(lp.f_index(k, t)) = line.nu;
      }
    }
    for (int r = 0; r < lp.n; ++r) {
      if (!(lp.cost_quad(r) > 0.0)) {
        std::ostringstream os;
        os << "node " << i << " coordinate " << r << " has non-positive quadratic cost";
        throw std::invalid_argument(os.str());
      }
      problem.sigma_min = std::min(problem.sigma_min, lp.cost_quad(r));
      problem.l_max = std::max(problem.l_max, lp.cost_quad(r));
    }

    problem.x_offset[i] = problem.total_n;
    problem.total_n += lp.n;
    problem.nodes.push_back(i);
    problem.locals.emplace(i, std::move(lp));
  }
  return problem;
}

double cost_eval(const LocalProblem& lp, const Eigen::VectorXd& x) {
  if (x.size() != lp.n) throw std::invalid_argument("cost_eval: dimension mismatch");
  double sum = 0.0;
  for (int r = 0; r < lp.n; ++r) {
    sum += 0.5 * lp.cost_quad(r) * x(r) * x(r) + lp.cost_lin(r) * x(r);
  }
  return sum;
}

Eigen::VectorXd cost_grad(const LocalProblem& lp, const Eigen::VectorXd& x) {
  if (x.size() != lp.n) throw std::invalid_argument("cost_grad: dimension mismatch");
  return lp.cost_quad.cwiseProduct(x) + lp.cost_lin;
}

double total_cost(const CompactProblem& problem, const Eigen::VectorXd& x) {
  if (x.size() != problem.total_n) throw std::invalid_argument("total_cost: dimension mismatch");
  // Neumaier-compensated sum keeps the trace monotonicity checks clean.
  double sum = 0.0, comp = 0.0;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const double term = cost_eval(lp, x.segment(problem.x_offset.at(i), lp.n));
    const double t = sum + term;
    comp += (std::abs(sum) >= std::abs(term)) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return sum + comp;
}

StackedConstraints stack_constraints(const CompactProblem& problem) {
  StackedConstraints sc;
  int rows = 0;
  for (int i : problem.nodes) rows += problem.local(i).m;
  for (int i : problem.nodes) {
    sc.coupling_row[i] = rows;
    rows += problem.K;
  }
  sc.rows = rows;
  sc.h = Eigen::VectorXd::Zero(rows);

  std::vector<Eigen::Triplet<double>> trips;
  int r0 = 0;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    sc.local_row[i] = r0;
    const int c0 = problem.x_offset.at(i);
    for (int k = 0; k < lp.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(lp.A, k); it; ++it) {
        trips.emplace_back(r0 + static_cast<int>(it.row()), c0 + static_cast<int>(it.col()),
                           it.value());
      }
    }
    sc.h.segment(r0, lp.m) = lp.a;
    r0 += lp.m;
  }
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const int cr = sc.coupling_row.at(i);
    const int ci = problem.x_offset.at(i);
    for (int k = 0; k < lp.B_self.outerSize(); ++k) {
      for (SpMat::InnerIterator it(lp.B_self, k); it; ++it) {
        trips.emplace_back(cr + static_cast<int>(it.row()), ci + static_cast<int>(it.col()),
                           it.value());
      }
    }
    // contributions B_ji from every neighbor j into i's balance rows
    for (int j : lp.nbrs) {
      const auto& lpj = problem.local(j);
      const auto& Bji = lpj.B_out.at(i);
      const int cj = problem.x_offset.at(j);
      for (int k = 0; k < Bji.outerSize(); ++k) {
        for (SpMat::InnerIterator it(Bji, k); it; ++it) {
          trips.emplace_back(cr + static_cast<int>(it.row()), cj + static_cast<int>(it.col()),
                             it.value());
        }
      }
    }
    sc.h.segment(cr, problem.K) = lp.b;
  }
  sc.H = SpMat(rows, problem.total_n);
  sc.H.setFromTriplets(trips.begin(), trips.end());
  return sc;
}

AppliedControls extract_controls(const CompactProblem& problem, const Eigen::VectorXd& x, int k) {
  if (x.size() != problem.total_n) {
    throw std::invalid_argument("extract_controls: dimension mismatch");
  }
  AppliedControls out;
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const int off = problem.x_offset.at(i);
    if (lp.has_gen) out.p[i] = x(off + lp.p_index(k));
    if (lp.has_store) {
      out.e_c[i] = x(off + lp.ec_index(k));
      out.e_d[i] = x(off + lp.ed_index(k));
    }
    for (int t = 0; t < lp.num_nbrs(); ++t) {
      out.flow[{i, lp.nbrs[static_cast<size_t>(t)]}] = x(off + lp.f_index(k, t));
    }
  }
  return out;
}

}  // namespace gridmpc
