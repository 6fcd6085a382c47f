#include "gridmpc/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gridmpc {

using nlohmann::json;

namespace {

// standard IEEE 30-bus branch list (41 undirected branches)
const std::vector<std::pair<int, int>> kIeee30Branches = {
    {1, 2},   {1, 3},   {2, 4},   {3, 4},   {2, 5},   {2, 6},   {4, 6},
    {5, 7},   {6, 7},   {6, 8},   {6, 9},   {6, 10},  {9, 11},  {9, 10},
    {4, 12},  {12, 13}, {12, 14}, {12, 15}, {12, 16}, {14, 15}, {16, 17},
    {15, 18}, {18, 19}, {19, 20}, {10, 20}, {10, 17}, {10, 21}, {10, 22},
    {21, 22}, {15, 23}, {22, 24}, {23, 24}, {24, 25}, {25, 26}, {25, 27},
    {28, 27}, {27, 29}, {27, 30}, {29, 30}, {8, 28},  {6, 28},
};

struct GenRow {
  int bus;
  double alpha, omega, p_max, ramp_lo, ramp_hi;
};
const std::vector<GenRow> kGenerators = {
    {1, 2.0, 110.25, 400, -80, 80},   {2, 1.25, 140.75, 500, -100, 100},
    {8, 1.2, 14.00, 1000, -300, 300}, {10, 1.25, 140.00, 500, -100, 100},
    {13, 1.0, 100.25, 600, -120, 120}, {18, 1.4, 120.50, 400, -80, 80},
    {22, 0.5, 150.60, 1000, -200, 200}, {23, 0.9, 170.00, 800, -160, 160},
    {27, 1.6, 130.25, 300, -80, 80},  {30, 0.8, 110.25, 1000, -150, 150},
};

struct StoreRow {
  int bus;
  double eff, c, d, rate, soc_max, upsilon, varsigma;
};
const std::vector<StoreRow> kStorages = {
    {2, 0.95, 0.92, 0.94, 50, 500, 0.75, 0.85},  {6, 0.98, 0.95, 0.95, 100, 1000, 1.2, 1.1},
    {10, 0.92, 0.91, 0.96, 80, 500, 1.25, 1.5},  {19, 0.94, 0.93, 0.97, 60, 800, 1.1, 1.0},
    {26, 0.99, 0.94, 0.98, 50, 500, 1.25, 1.15}, {29, 0.96, 0.91, 0.92, 100, 900, 1.4, 1.2},
};

const std::vector<double> kBaseDemand = {50, 60, 70, 80, 90, 100, 100, 95, 85, 80, 70, 60};

std::string edge_key(const Edge& e) {
  std::ostringstream os;
  os << e.first << "-" << e.second;
  return os.str();
}

Edge parse_edge_key(const std::string& key) {
  const auto dash = key.find('-');
  if (dash == std::string::npos) throw ScenarioParseError("bad edge key '" + key + "'");
  try {
    return {std::stoi(key.substr(0, dash)), std::stoi(key.substr(dash + 1))};
  } catch (const std::exception&) {
    throw ScenarioParseError("bad edge key '" + key + "'");
  }
}

int parse_node_key(const std::string& key) {
  try {
    return std::stoi(key);
  } catch (const std::exception&) {
    throw ScenarioParseError("bad node key '" + key + "'");
  }
}

json table_to_json(const std::map<std::pair<int, int>, double>& table) {
  // (node, step) table -> {"node": [v0, v1, ...]}
  json out = json::object();
  std::map<int, std::map<int, double>> by_node;
  for (const auto& [key, v] : table) by_node[key.first][key.second] = v;
  for (const auto& [node, steps] : by_node) {
    json arr = json::array();
    int expect = 0;
    for (const auto& [k, v] : steps) {
      if (k != expect++) throw ScenarioParseError("forecast table has gaps");
      arr.push_back(v);
    }
    out[std::to_string(node)] = arr;
  }
  return out;
}

std::map<std::pair<int, int>, double> json_to_table(const json& j) {
  std::map<std::pair<int, int>, double> out;
  for (const auto& [key, arr] : j.items()) {
    const int node = parse_node_key(key);
    int k = 0;
    for (const auto& v : arr) out[{node, k++}] = v.get<double>();
  }
  return out;
}

}  // namespace

ForecastSeries Scenario::forecast_at(int t0) const {
  ForecastSeries fs;
  fs.horizon = model.horizon;
  fs.epsilon = epsilon;
  const int K = model.horizon;
  for (int i = 1; i <= model.num_nodes; ++i) {
    for (int k = 0; k < K; ++k) {
      const int t = t0 + k;
      if (demand_rule) {
        const auto& rule = *demand_rule;
        const int len = static_cast<int>(rule.profile.size());
        if (len == 0) throw ScenarioParseError("demand rule has an empty profile");
        const int idx = rule.wrap ? (t % len) : std::min(t, len - 1);
        const int offset = (i + t) % rule.offset_mod;
        fs.demand_mean[{i, k}] = rule.profile[static_cast<size_t>(idx)] +
                                 rule.offset_amp * static_cast<double>(offset);
        fs.demand_var[{i, k}] = rule.variance;
      } else {
        auto itm = demand_mean.find({i, t});
        auto itv = demand_var.find({i, t});
        if (itm == demand_mean.end() || itv == demand_var.end()) {
          std::ostringstream os;
          os << "explicit forecast missing node " << i << " step " << t;
          throw std::out_of_range(os.str());
        }
        fs.demand_mean[{i, k}] = itm->second;
        fs.demand_var[{i, k}] = itv->second;
      }
    }
  }
  for (const auto& [i, g] : model.generators) {
    for (int k = 0; k < K; ++k) {
      const int t = t0 + k;
      auto itm = cap_mean.find({i, t});
      auto itv = cap_var.find({i, t});
      fs.cap_mean[{i, k}] = itm != cap_mean.end() ? itm->second : g.p_max;
      fs.cap_var[{i, k}] = itv != cap_var.end() ? itv->second : 0.0;
    }
  }
  return fs;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open scenario file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "JSON parse error in " << path << " at byte " << e.byte << ": " << e.what();
    throw ScenarioParseError(os.str());
  }

  Scenario sc;
  try {
    const auto& net = doc.at("network");
    sc.model.num_nodes = net.at("nodes").get<int>();
    sc.model.horizon = net.at("horizon").get<int>();
    sc.model.sample_time = net.value("sample_time", 1.0);
    for (const auto& e : net.at("edges")) {
      sc.model.edges.insert({e.at(0).get<int>(), e.at(1).get<int>()});
    }

    const json gens_json = doc.value("generators", json::object());
    for (const auto& [key, g] : gens_json.items()) {
      GeneratorParams gp;
      gp.alpha = g.at("alpha").get<double>();
      gp.omega = g.at("omega").get<double>();
      gp.p_max = g.at("p_max").get<double>();
      gp.ramp_lo = g.at("ramp_lo").get<double>();
      gp.ramp_hi = g.at("ramp_hi").get<double>();
      gp.p_prev = g.value("p_prev", 0.0);
      sc.model.generators[parse_node_key(key)] = gp;
    }
    const json stores_json = doc.value("storage", json::object());
    for (const auto& [key, s] : stores_json.items()) {
      StorageParams sp;
      sp.eff = s.at("eff").get<double>();
      sp.c = s.at("c").get<double>();
      sp.d = s.at("d").get<double>();
      sp.e_c_max = s.at("e_c_max").get<double>();
      sp.e_d_max = s.at("e_d_max").get<double>();
      sp.soc_max = s.at("soc_max").get<double>();
      sp.soc_prev = s.value("soc_prev", 0.0);
      sp.upsilon = s.at("upsilon").get<double>();
      sp.varsigma = s.at("varsigma").get<double>();
      sc.model.storages[parse_node_key(key)] = sp;
    }

    if (doc.contains("lines")) {
      for (const auto& [key, l] : doc.at("lines").items()) {
        LineParams lp;
        lp.f_max = l.at("f_max").get<double>();
        lp.varpi = l.at("varpi").get<double>();
        lp.nu = l.at("nu").get<double>();
        sc.model.lines[parse_edge_key(key)] = lp;
      }
      if (doc.contains("line_seed")) sc.line_seed = doc.at("line_seed").get<std::uint64_t>();
    } else if (doc.contains("line_seed")) {
      sc.line_seed = doc.at("line_seed").get<std::uint64_t>();
      sc.model.lines = sample_line_params(*sc.line_seed, sc.model.edges);
    } else {
      throw ScenarioParseError("scenario needs either a 'lines' table or a 'line_seed'");
    }

    const auto& fc = doc.at("forecast");
    sc.epsilon = fc.at("epsilon").get<double>();
    if (fc.contains("demand_rule")) {
      DemandRule rule;
      const auto& r = fc.at("demand_rule");
      rule.profile = r.at("profile").get<std::vector<double>>();
      rule.offset_amp = r.value("offset_amp", 10.0);
      rule.offset_mod = r.value("offset_mod", 5);
      rule.variance = r.value("variance", 10.0);
      rule.wrap = r.value("wrap", true);
      if (rule.offset_mod <= 0) throw ScenarioParseError("offset_mod must be positive");
      sc.demand_rule = rule;
    } else {
      sc.demand_mean = json_to_table(fc.at("demand_mean"));
      sc.demand_var = json_to_table(fc.at("demand_var"));
    }
    if (fc.contains("cap_mean")) sc.cap_mean = json_to_table(fc.at("cap_mean"));
    if (fc.contains("cap_var")) sc.cap_var = json_to_table(fc.at("cap_var"));

    if (doc.contains("mpc")) sc.mpc_steps = doc.at("mpc").value("steps", 12);
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("scenario schema error in ") + path + ": " + e.what());
  }
  return sc;
}

void save_scenario(const Scenario& sc, const std::string& path) {
  json doc;
  doc["network"]["nodes"] = sc.model.num_nodes;
  doc["network"]["horizon"] = sc.model.horizon;
  doc["network"]["sample_time"] = sc.model.sample_time;
  json edges = json::array();
  for (const auto& e : sc.model.edges) edges.push_back({e.first, e.second});
  doc["network"]["edges"] = edges;

  json gens = json::object();
  for (const auto& [i, g] : sc.model.generators) {
    gens[std::to_string(i)] = {{"alpha", g.alpha},     {"omega", g.omega},
                               {"p_max", g.p_max},     {"ramp_lo", g.ramp_lo},
                               {"ramp_hi", g.ramp_hi}, {"p_prev", g.p_prev}};
  }
  doc["generators"] = gens;

  json stores = json::object();
  for (const auto& [i, s] : sc.model.storages) {
    stores[std::to_string(i)] = {{"eff", s.eff},           {"c", s.c},
                                 {"d", s.d},               {"e_c_max", s.e_c_max},
                                 {"e_d_max", s.e_d_max},   {"soc_max", s.soc_max},
                                 {"soc_prev", s.soc_prev}, {"upsilon", s.upsilon},
                                 {"varsigma", s.varsigma}};
  }
  doc["storage"] = stores;

  json lines = json::object();
  for (const auto& [e, l] : sc.model.lines) {
    lines[edge_key(e)] = {{"f_max", l.f_max}, {"varpi", l.varpi}, {"nu", l.nu}};
  }
  doc["lines"] = lines;
  if (sc.line_seed) doc["line_seed"] = *sc.line_seed;

  doc["forecast"]["epsilon"] = sc.epsilon;
  if (sc.demand_rule) {
    const auto& r = *sc.demand_rule;
    doc["forecast"]["demand_rule"] = {{"profile", r.profile},
                                      {"offset_amp", r.offset_amp},
                                      {"offset_mod", r.offset_mod},
                                      {"variance", r.variance},
                                      {"wrap", r.wrap}};
  } else {
    doc["forecast"]["demand_mean"] = table_to_json(sc.demand_mean);
    doc["forecast"]["demand_var"] = table_to_json(sc.demand_var);
  }
  if (!sc.cap_mean.empty()) doc["forecast"]["cap_mean"] = table_to_json(sc.cap_mean);
  if (!sc.cap_var.empty()) doc["forecast"]["cap_var"] = table_to_json(sc.cap_var);
  doc["mpc"]["steps"] = sc.mpc_steps;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open scenario file for writing: " + path);
  out << doc.dump(2) << "\n";
}

Scenario make_benchmark_scenario(std::uint64_t seed, int K) {
  Scenario sc;
  sc.model.num_nodes = 30;
  sc.model.horizon = K;
  sc.model.sample_time = 1.0;
  for (const auto& [i, j] : kIeee30Branches) {
    sc.model.edges.insert({i, j});
    sc.model.edges.insert({j, i});
  }
  sc.model.lines = sample_line_params(seed, sc.model.edges);
  sc.line_seed = seed;

  for (const auto& row : kGenerators) {
    GeneratorParams g;
    g.alpha = row.alpha;
    g.omega = row.omega;
    g.p_max = row.p_max;
    g.ramp_lo = row.ramp_lo;
    g.ramp_hi = row.ramp_hi;
    g.p_prev = 0.5 * row.p_max;
    sc.model.generators[row.bus] = g;
  }
  for (const auto& row : kStorages) {
    StorageParams s;
    s.eff = row.eff;
    s.c = row.c;
    s.d = row.d;
    s.e_c_max = row.rate;
    s.e_d_max = row.rate;
    s.soc_max = row.soc_max;
    s.soc_prev = 0.5 * row.soc_max;
    s.upsilon = row.upsilon;
    s.varsigma = row.varsigma;
    sc.model.storages[row.bus] = s;
  }

  DemandRule rule;
  rule.profile = kBaseDemand;
  rule.offset_amp = 10.0;
  rule.offset_mod = 5;
  rule.variance = 10.0;
  rule.wrap = true;
  sc.demand_rule = rule;
  sc.epsilon = 0.25;
  sc.mpc_steps = 12;
  return sc;
}

void write_solution_json(const CompactProblem& problem, const Eigen::VectorXd& x,
                         const std::string& method, bool converged, int iterations, double cost,
                         const std::string& path) {
  json doc;
  doc["method"] = method;
  doc["converged"] = converged;
  doc["iterations"] = iterations;
  doc["cost"] = cost;
  json per_node = json::object();
  for (int i : problem.nodes) {
    const auto& lp = problem.local(i);
    const int off = problem.x_offset.at(i);
    json entry = json::object();
    if (lp.has_gen) {
      json arr = json::array();
      for (int k = 0; k < lp.K; ++k) arr.push_back(x(off + lp.p_index(k)));
      entry["P"] = arr;
    }
    if (lp.has_store) {
      json ec = json::array(), ed = json::array();
      for (int k = 0; k < lp.K; ++k) {
        ec.push_back(x(off + lp.ec_index(k)));
        ed.push_back(x(off + lp.ed_index(k)));
      }
      entry["E_c"] = ec;
      entry["E_d"] = ed;
    }
    json flows = json::object();
    for (int t = 0; t < lp.num_nbrs(); ++t) {
      json arr = json::array();
      for (int k = 0; k < lp.K; ++k) arr.push_back(x(off + lp.f_index(k, t)));
      flows[std::to_string(lp.nbrs[static_cast<size_t>(t)])] = arr;
    }
    entry["F"] = flows;
    per_node[std::to_string(i)] = entry;
  }
  doc["x"] = per_node;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open solution file for writing: " + path);
  out << doc.dump(2) << "\n";
}

Eigen::VectorXd read_solution_json(const CompactProblem& problem, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open solution file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "JSON parse error in " << path << " at byte " << e.byte << ": " << e.what();
    throw ScenarioParseError(os.str());
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(problem.total_n);
  try {
    const auto& per_node = doc.at("x");
    for (int i : problem.nodes) {
      const auto& lp = problem.local(i);
      const int off = problem.x_offset.at(i);
      const auto& entry = per_node.at(std::to_string(i));
      if (lp.has_gen) {
        const auto& arr = entry.at("P");
        for (int k = 0; k < lp.K; ++k) x(off + lp.p_index(k)) = arr.at(k).get<double>();
      }
      if (lp.has_store) {
        const auto& ec = entry.at("E_c");
        const auto& ed = entry.at("E_d");
        for (int k = 0; k < lp.K; ++k) {
          x(off + lp.ec_index(k)) = ec.at(k).get<double>();
          x(off + lp.ed_index(k)) = ed.at(k).get<double>();
        }
      }
      const auto& flows = entry.at("F");
      for (int t = 0; t < lp.num_nbrs(); ++t) {
        const auto& arr = flows.at(std::to_string(lp.nbrs[static_cast<size_t>(t)]));
        for (int k = 0; k < lp.K; ++k) x(off + lp.f_index(k, t)) = arr.at(k).get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("solution schema error in ") + path + ": " + e.what());
  }
  return x;
}

}  // namespace gridmpc
