#include "ope/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ope/error.hpp"
#include "ope/rng.hpp"

namespace ope {

using nlohmann::json;

namespace {

const std::set<std::string> kEstimators = {"ipw", "oracle", "two-stage-weighted-krr",
                                           "two-stage-unweighted-krr"};

// FNV-1a; std::hash is not stable across standard libraries.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error("bad-config", std::string("field '") + key + "': " + e.what());
  }
}

Table table_at(const json& j, const char* key) {
  if (!j.contains(key)) throw Error("bad-instance", std::string("missing table '") + key + "'");
  try {
    return j.at(key).get<Table>();
  } catch (const json::exception& e) {
    throw Error("bad-instance", std::string("table '") + key + "': " + e.what());
  }
}

FiniteTables finite_tables_from_json(const json& j) {
  FiniteTables t;
  try {
    t.states = j.at("states").get<std::vector<double>>();
    t.probs = j.at("probs").get<std::vector<double>>();
    t.actions.actions = j.at("actions").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error("bad-instance", std::string("finite instance: ") + e.what());
  }
  t.actions.base_weights = get_or<std::vector<double>>(
      j, "base_weights", std::vector<double>(t.actions.actions.size(), 1.0));
  t.propensity = table_at(j, "propensity");
  t.weight = table_at(j, "weight");
  t.mean = table_at(j, "mean");
  if (j.contains("sd")) {
    t.sd = table_at(j, "sd");
  } else {
    t.sd.assign(t.states.size(), std::vector<double>(t.actions.size(), 0.0));
  }
  return t;
}

std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

const char* kHeader = "instance_id,estimator,n,reps,normalized_mse,mc_stderr,master_seed";

}  // namespace

json finite_tables_to_json(const FiniteTables& t) {
  return json{{"kind", "finite"},
              {"states", t.states},
              {"probs", t.probs},
              {"actions", t.actions.actions},
              {"base_weights", t.actions.base_weights},
              {"propensity", t.propensity},
              {"weight", t.weight},
              {"mean", t.mean},
              {"sd", t.sd}};
}

ProblemInstance instance_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind"))
    throw Error("bad-instance", "instance description needs a 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "missing-data") {
    MissingDataParams p;
    const std::string shape = get_or<std::string>(j, "propensity", "pi1");
    if (shape == "pi1") {
      p.shape = PropensityShape::Pi1;
    } else if (shape == "pi2") {
      p.shape = PropensityShape::Pi2;
    } else {
      throw Error("bad-instance", "propensity must be pi1 or pi2, got " + shape);
    }
    p.gamma = get_or<double>(j, "gamma", p.gamma);
    p.sigma0 = get_or<double>(j, "sigma0", p.sigma0);
    p.pi_min = get_or<double>(j, "pi_min", p.pi_min);
    if (!(p.gamma >= 0.0 && p.gamma <= 1.0))
      throw Error("bad-instance", "gamma must lie in [0,1]");
    if (!(p.sigma0 >= 0.0)) throw Error("bad-instance", "sigma0 must be >= 0");
    if (!(p.pi_min > 0.0 && p.pi_min <= 0.5))
      throw Error("bad-instance", "pi_min must lie in (0, 0.5]");
    return missing_data_instance(p);
  }
  if (kind == "d1") return d1_instance(get_or<double>(j, "sd", 0.0));
  if (kind == "finite") {
    ProblemInstance inst =
        finite_table_instance(get_or<std::string>(j, "id", "finite"), finite_tables_from_json(j));
    inst.validate();
    return inst;
  }
  if (kind == "finite-custom") {
    const std::string path = get_or<std::string>(j, "path", "");
    if (path.empty()) throw Error("bad-instance", "finite-custom needs a 'path'");
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open instance file " + path);
    json body;
    try {
      in >> body;
    } catch (const json::exception& e) {
      throw Error("bad-instance", path + ": " + e.what());
    }
    if (!body.contains("id")) body["id"] = "finite-custom(" + path + ")";
    body["kind"] = "finite";
    return instance_from_json(body);
  }
  throw Error("bad-instance", "unknown instance kind " + kind);
}

ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open instance file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("bad-instance", path + ": " + e.what());
  }
  return instance_from_json(j);
}

void ExperimentConfig::validate() const {
  if (reps < 1) throw Error("bad-config", "reps must be >= 1");
  if (folds < 2) throw Error("bad-config", "folds must be >= 2");
  if (threads < 1) throw Error("bad-config", "threads must be >= 1");
  if (n_grid.empty()) throw Error("bad-config", "n_grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0) throw Error("bad-config", "n_grid entries must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw Error("bad-config", "n_grid must be sorted ascending without repeats");
  }
  if (estimators.empty()) throw Error("bad-config", "no estimators");
  std::set<std::string> seen;
  for (const auto& e : estimators) {
    if (!kEstimators.count(e)) throw Error("bad-config", "unknown estimator " + e);
    if (!seen.insert(e).second) throw Error("bad-config", "estimator listed twice: " + e);
  }
  if (lambda_grid.empty()) throw Error("bad-config", "lambda_grid is empty");
  for (double l : lambda_grid)
    if (!(l > 0.0) || !std::isfinite(l)) throw Error("bad-config", "lambda_grid values must be > 0");
  if (!instance.is_object() || !instance.contains("kind"))
    throw Error("bad-config", "instance needs a 'kind'");
  if (instance.contains("gamma")) {
    const double g = instance.at("gamma").get<double>();
    if (!(g >= 0.0 && g <= 1.0)) throw Error("bad-config", "gamma must lie in [0,1]");
  }
}

ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {"instance", "estimators", "n_grid",
                                              "reps",     "folds",      "lambda_grid",
                                              "master_seed", "output",  "threads"};
  if (!j.is_object()) throw Error("bad-config", "config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw Error("bad-config", "unknown config field " + it.key());
  ExperimentConfig c;
  if (j.contains("instance")) c.instance = j.at("instance");
  c.estimators = get_or(j, "estimators", c.estimators);
  c.n_grid = get_or(j, "n_grid", c.n_grid);
  c.reps = get_or(j, "reps", c.reps);
  c.folds = get_or(j, "folds", c.folds);
  c.lambda_grid = get_or(j, "lambda_grid", c.lambda_grid);
  c.master_seed = get_or(j, "master_seed", c.master_seed);
  c.output_path = get_or(j, "output", c.output_path);
  c.threads = get_or(j, "threads", c.threads);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("bad-config", path + ": " + e.what());
  }
  return config_from_json(j);
}

ProblemInstance build_builtin_instance(const ExperimentConfig& config) {
  return instance_from_json(config.instance);
}

const ResultRow* ResultsTable::find(const std::string& estimator, std::size_t n) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.n == n) return &r;
  return nullptr;
}

std::uint64_t dataset_seed(std::uint64_t master, std::size_t n, std::size_t rep) {
  return derive_seed(master, {0x64617461ULL, n, rep});
}

std::uint64_t estimator_seed(std::uint64_t master, const std::string& estimator,
                             std::size_t n, std::size_t rep) {
  return derive_seed(master, {fnv1a(estimator), n, rep});
}

std::vector<double> run_replication(const ExperimentConfig& config,
                                    const ProblemInstance& inst, double tau,
                                    std::size_t n, std::size_t rep) {
  const Dataset data = sample_dataset(inst, n, dataset_seed(config.master_seed, n, rep));
  const KnownDesign design = known_design(inst);
  std::vector<double> err;
  err.reserve(config.estimators.size());
  for (const auto& est : config.estimators) {
    double tau_hat = 0.0;
    try {
      if (est == "ipw") {
        tau_hat = ipw_estimate(data, design).tau_hat;
      } else if (est == "oracle") {
        tau_hat = oracle_estimate(data, inst).tau_hat;
      } else {
        FirstStageSpec spec;
        spec.regressor_id = est.substr(std::string("two-stage-").size());
        spec.grid = config.lambda_grid;
        spec.folds = config.folds;
        tau_hat = two_stage_estimate(data, design, spec,
                                     estimator_seed(config.master_seed, est, n, rep))
                      .report.tau_hat;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "cell (estimator=" + est + ", n=" + std::to_string(n) +
                                ", rep=" + std::to_string(rep) + "): " + e.what());
    }
    err.push_back((tau_hat - tau) * (tau_hat - tau));
  }
  return err;
}

ResultsTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ProblemInstance inst = build_builtin_instance(config);
  const double tau = true_functional(inst);
  const std::size_t E = config.estimators.size(), N = config.n_grid.size();
  const std::size_t R = static_cast<std::size_t>(config.reps);
  const std::size_t jobs = N * R;

  // sq[(ni * R + rep) * E + e]
  std::vector<double> sq(jobs * E, 0.0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t fail_job = jobs;
  std::string fail_code, fail_what;

  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs || failed.load()) return;
      const std::size_t ni = job / R, rep = job % R;
      try {
        const auto e = run_replication(config, inst, tau, config.n_grid[ni], rep);
        std::copy(e.begin(), e.end(), sq.begin() + static_cast<std::ptrdiff_t>(job * E));
      } catch (const Error& ex) {
        std::lock_guard<std::mutex> lock(mu);
        if (job < fail_job) {
          fail_job = job;
          fail_code = ex.code();
          fail_what = ex.what();
        }
        failed.store(true);
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(mu);
        if (job < fail_job) {
          fail_job = job;
          fail_code = "internal";
          fail_what = ex.what();
        }
        failed.store(true);
      }
    }
  };

  const std::size_t nthreads =
      std::min<std::size_t>(static_cast<std::size_t>(config.threads), jobs);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw Error(fail_code, fail_what);

  ResultsTable table;
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t ni = 0; ni < N; ++ni) {
      const double n = static_cast<double>(config.n_grid[ni]);
      double mean = 0.0;
      for (std::size_t r = 0; r < R; ++r) mean += sq[(ni * R + r) * E + e];
      mean /= static_cast<double>(R);
      double ss = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const double d = sq[(ni * R + r) * E + e] - mean;
        ss += d * d;
      }
      ResultRow row;
      row.instance_id = inst.id;
      row.estimator = config.estimators[e];
      row.n = config.n_grid[ni];
      row.reps = config.reps;
      row.normalized_mse = n * mean;
      row.mc_stderr = R > 1 ? n * std::sqrt(ss / static_cast<double>(R - 1)) /
                                  std::sqrt(static_cast<double>(R))
                            : 0.0;
      row.master_seed = config.master_seed;
      table.rows.push_back(row);
    }
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return a.estimator != b.estimator ? a.estimator < b.estimator : a.n < b.n;
  });
  return table;
}

void write_results_csv(const ResultsTable& table, std::ostream& os) {
  std::vector<ResultRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return a.estimator != b.estimator ? a.estimator < b.estimator : a.n < b.n;
  });
  os << kHeader << '\n';
  for (const auto& r : rows) {
    if (r.instance_id.find(',') != std::string::npos || r.estimator.find(',') != std::string::npos)
      throw Error("bad-table", "identifiers may not contain commas");
    os << r.instance_id << ',' << r.estimator << ',' << r.n << ',' << r.reps << ','
       << fmt10(r.normalized_mse) << ',' << fmt10(r.mc_stderr) << ',' << r.master_seed << '\n';
  }
}

void write_results_csv(const ResultsTable& table, const std::string& path) {
  std::ostringstream buf;
  write_results_csv(table, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot open " + path + " for writing");
  out << buf.str();
  out.flush();
  if (!out) throw Error("io", "write failed for " + path);
}

ResultsTable read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kHeader)
    throw Error("bad-table", "missing or unexpected results header");
  ResultsTable t;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7)
      throw Error("bad-table", "line " + std::to_string(lineno) + ": expected 7 fields");
    ResultRow r;
    try {
      r.instance_id = f[0];
      r.estimator = f[1];
      r.n = std::stoull(f[2]);
      r.reps = std::stoi(f[3]);
      r.normalized_mse = std::stod(f[4]);
      r.mc_stderr = std::stod(f[5]);
      r.master_seed = std::stoull(f[6]);
    } catch (const std::exception&) {
      throw Error("bad-table", "line " + std::to_string(lineno) + ": unparsable field");
    }
    t.rows.push_back(r);
  }
  return t;
}

ResultsTable read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path);
  return read_results_csv(in);
}

ElbowSummary elbow_report(const ResultsTable& table) {
  std::map<std::string, std::map<std::size_t, const ResultRow*>> by;
  for (const auto& r : table.rows) by[r.estimator][r.n] = &r;
  if (!by.count("oracle")) throw Error("insufficient-grid", "table has no oracle rows");

  ElbowSummary s;
  for (const auto& [n, row] : by.at("oracle")) s.n_values.push_back(n);
  if (s.n_values.size() < 3)
    throw Error("insufficient-grid", "elbow report needs at least 3 n values");
  const ResultRow& oracle_last = *by.at("oracle").at(s.n_values.back());

  // oracle first, then two-stage estimators; others are not part of the report
  std::vector<std::string> names = {"oracle"};
  for (const auto& [name, rows] : by)
    if (name.rfind("two-stage-", 0) == 0) names.push_back(name);

  for (const auto& name : names) {
    const auto& rows = by.at(name);
    for (std::size_t n : s.n_values)
      if (!rows.count(n))
        throw Error("insufficient-grid", name + " lacks n=" + std::to_string(n));
    ElbowLine line;
    line.estimator = name;
    const ResultRow& first = *rows.at(s.n_values.front());
    const ResultRow& last = *rows.at(s.n_values.back());
    line.small_over_large = first.normalized_mse / last.normalized_mse;
    line.over_oracle = last.normalized_mse / oracle_last.normalized_mse;
    line.non_increasing = true;
    for (std::size_t i = 1; i < s.n_values.size(); ++i) {
      const ResultRow& a = *rows.at(s.n_values[i - 1]);
      const ResultRow& b = *rows.at(s.n_values[i]);
      const double se = std::hypot(a.mc_stderr, b.mc_stderr);
      if (b.normalized_mse > a.normalized_mse + 2.0 * se) line.non_increasing = false;
    }
    s.lines.push_back(line);
  }
  return s;
}

FrozenBoundCheck frozen_first_stage_check(const ProblemInstance& inst,
                                          const StateActionFn& mu_hat, std::size_t n,
                                          int reps, std::uint64_t seed) {
  if (reps < 2) throw Error("bad-argument", "frozen check needs reps >= 2");
  if (n < 2) throw Error("bad-argument", "frozen check needs n >= 2");
  const double tau = true_functional(inst);
  const KnownDesign design = known_design(inst);
  std::vector<double> sq(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const Dataset data = sample_dataset(inst, n, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    const double t = cross_fit_with(data, design, mu_hat, mu_hat, "frozen").tau_hat;
    sq[static_cast<std::size_t>(r)] = (t - tau) * (t - tau);
  }
  double mean = 0.0;
  for (double v : sq) mean += v;
  mean /= reps;
  double ss = 0.0;
  for (double v : sq) ss += (v - mean) * (v - mean);

  FrozenBoundCheck c;
  const double nd = static_cast<double>(n);
  c.normalized_mse = nd * mean;
  c.mc_stderr = nd * std::sqrt(ss / (reps - 1)) / std::sqrt(static_cast<double>(reps));
  const StateActionFn mu_star = inst.outcome_mean;
  const StateActionFunction diff([mu_hat, mu_star](double x, int a) {
    return mu_hat(x, a) - mu_star(x, a);
  });
  c.bound = efficient_variance(inst) + 2.0 * weighted_norm_sq(inst, diff);
  c.holds = c.normalized_mse <= c.bound + 3.0 * c.mc_stderr;
  return c;
}

}  // namespace ope
