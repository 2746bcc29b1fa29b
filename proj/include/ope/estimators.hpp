#pragma once

#include <cstdint>
#include <string>

#include "ope/core.hpp"
#include "ope/regression.hpp"

namespace ope {

struct EstimateReport {
  double tau_hat = 0.0;
  std::size_t n = 0;
  std::string estimator_id;
  double plugin_variance = 0.0;  // variance of the per-row summands
  std::uint64_t seed = 0;
};

std::string estimate_csv_header();
std::string estimate_csv_row(const EstimateReport& r);

// (1/n) sum g/pi * y
EstimateReport ipw_estimate(const Dataset& data, const KnownDesign& design);

// (1/n) sum [ g/pi * y - f + <f, pi> ]
EstimateReport generic_estimate(const Dataset& data, const KnownDesign& design,
                                const StateActionFunction& f);

// The generic estimator at f = f*, which needs the true mu*.
EstimateReport oracle_estimate(const Dataset& data, const ProblemInstance& inst);

// First ceil(n/2) rows form B1, the rest B2.
std::size_t first_half_size(std::size_t n);

// Cross-fit combination with given first-stage functions: rows of B1 use the
// auxiliary built from mu2, rows of B2 the one built from mu1.
EstimateReport cross_fit_with(const Dataset& data, const KnownDesign& design,
                              const StateActionFn& mu1, const StateActionFn& mu2,
                              const std::string& estimator_id);

struct TwoStageResult {
  EstimateReport report;
  FirstStageModel model1;  // fitted on B1
  FirstStageModel model2;  // fitted on B2
  // sqrt of the sample mean of g^2/pi^2 (mu1 - mu2)^2 over all rows.
  double fold_discrepancy = 0.0;
};

TwoStageResult two_stage_estimate(const Dataset& data, const KnownDesign& design,
                                  const FirstStageSpec& spec, std::uint64_t seed);

// Sample variance of g/pi (y - mu) + <g, mu> over the rows.
double asymptotic_variance_estimate(const Dataset& data, const StateActionFn& fitted,
                                    const KnownDesign& design);

}  // namespace ope
