#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ope/core.hpp"
#include "ope/estimators.hpp"
#include "ope/instances.hpp"

namespace ope {

// Instance descriptions:
//   {"kind":"missing-data","propensity":"pi1","gamma":0,"sigma0":1,"pi_min":0.005}
//   {"kind":"d1","sd":1}
//   {"kind":"finite","states":[..],"probs":[..],"actions":[..],
//    "base_weights":[..],"propensity":[[..]],"weight":[[..]],"mean":[[..]],"sd":[[..]]}
//   {"kind":"finite-custom","path":"file.json"}  (file holds a "finite" object)
ProblemInstance instance_from_json(const nlohmann::json& j);
ProblemInstance load_instance(const std::string& path);
nlohmann::json finite_tables_to_json(const FiniteTables& t);

struct ExperimentConfig {
  nlohmann::json instance = {{"kind", "missing-data"}};
  std::vector<std::string> estimators = {"oracle", "two-stage-weighted-krr",
                                         "two-stage-unweighted-krr"};
  std::vector<std::size_t> n_grid = {500, 1000, 2000, 4000, 8000};
  int reps = 200;
  int folds = 5;
  std::vector<double> lambda_grid = default_lambda_grid();
  std::uint64_t master_seed = 1;
  std::string output_path = "results.csv";
  int threads = 1;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

ProblemInstance build_builtin_instance(const ExperimentConfig& config);

struct ResultRow {
  std::string instance_id;
  std::string estimator;
  std::size_t n = 0;
  int reps = 0;
  double normalized_mse = 0.0;
  double mc_stderr = 0.0;
  std::uint64_t master_seed = 0;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  const ResultRow* find(const std::string& estimator, std::size_t n) const;
};

// Per-rep seeds: data from (master_seed, n, rep), shared by every estimator;
// cross-validation shuffles from (master_seed, estimator, n, rep).
std::uint64_t dataset_seed(std::uint64_t master, std::size_t n, std::size_t rep);
std::uint64_t estimator_seed(std::uint64_t master, const std::string& estimator,
                             std::size_t n, std::size_t rep);

// Squared errors of one rep for each configured estimator, in config order.
std::vector<double> run_replication(const ExperimentConfig& config,
                                    const ProblemInstance& inst, double tau,
                                    std::size_t n, std::size_t rep);

ResultsTable run_experiment(const ExperimentConfig& config);

void write_results_csv(const ResultsTable& table, std::ostream& os);
void write_results_csv(const ResultsTable& table, const std::string& path);
ResultsTable read_results_csv(std::istream& is);
ResultsTable read_results_csv(const std::string& path);

struct ElbowLine {
  std::string estimator;
  double small_over_large = 0.0;  // nmse at the smallest n over the largest
  double over_oracle = 0.0;       // nmse at the largest n over the oracle's
  bool non_increasing = false;    // up to 2 combined mc_stderr per step
};

struct ElbowSummary {
  std::vector<std::size_t> n_values;
  std::vector<ElbowLine> lines;
};

ElbowSummary elbow_report(const ResultsTable& table);

// Frozen first stage mu_hat on a finite instance: Monte Carlo n*MSE of the
// cross-fit estimate against v*^2 + 2 ||mu_hat - mu*||_omega^2.
struct FrozenBoundCheck {
  double normalized_mse = 0.0;
  double mc_stderr = 0.0;
  double bound = 0.0;
  bool holds = false;  // normalized_mse <= bound + 3 mc_stderr
};

FrozenBoundCheck frozen_first_stage_check(const ProblemInstance& inst,
                                          const StateActionFn& mu_hat, std::size_t n,
                                          int reps, std::uint64_t seed);

}  // namespace ope
