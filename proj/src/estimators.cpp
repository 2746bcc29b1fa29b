#include "ope/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "ope/error.hpp"

namespace ope {

namespace {

double ratio_at(const KnownDesign& d, double x, int a) {
  const double p = d.propensity(x, a);
  if (!(p > 0.0)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "zero propensity at observed pair (x=%.17g, a=%d)", x, a);
    throw Error("zero-propensity", buf);
  }
  return d.weight(x, a) / p;
}

double design_inner(const KnownDesign& d, double x, const StateActionFn& f,
                    const StateActionFn& h) {
  double s = 0.0;
  for (std::size_t k = 0; k < d.actions.size(); ++k) {
    const int a = d.actions.actions[k];
    s += d.actions.base_weights[k] * f(x, a) * h(x, a);
  }
  return s;
}

// Mean and unbiased sample variance; the variance is 0 for a single value.
EstimateReport summarize(const std::vector<double>& z, const std::string& id,
                         std::uint64_t seed) {
  EstimateReport r;
  r.n = z.size();
  r.estimator_id = id;
  r.seed = seed;
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  double ss = 0.0;
  for (double v : z) ss += (v - mean) * (v - mean);
  r.tau_hat = mean;
  r.plugin_variance = z.size() > 1 ? ss / static_cast<double>(z.size() - 1) : 0.0;
  return r;
}

void require_rows(const Dataset& data) {
  if (data.triples.empty()) throw Error("empty-dataset", "dataset has no rows");
}

}  // namespace

std::string estimate_csv_header() {
  return "estimator_id,n,seed,tau_hat,plugin_variance";
}

std::string estimate_csv_row(const EstimateReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%.10g,%.10g", r.estimator_id.c_str(), r.n,
                static_cast<unsigned long long>(r.seed), r.tau_hat, r.plugin_variance);
  return buf;
}

EstimateReport ipw_estimate(const Dataset& data, const KnownDesign& design) {
  require_rows(data);
  std::vector<double> z;
  z.reserve(data.size());
  for (const Triple& t : data.triples) z.push_back(ratio_at(design, t.x, t.a) * t.y);
  return summarize(z, "ipw", data.seed);
}

EstimateReport generic_estimate(const Dataset& data, const KnownDesign& design,
                                const StateActionFunction& f) {
  require_rows(data);
  std::vector<double> z;
  z.reserve(data.size());
  for (const Triple& t : data.triples) {
    const double center = design_inner(design, t.x, f.fn, design.propensity);
    z.push_back(ratio_at(design, t.x, t.a) * t.y - f(t.x, t.a) + center);
  }
  return summarize(z, "generic", data.seed);
}

EstimateReport oracle_estimate(const Dataset& data, const ProblemInstance& inst) {
  require_rows(data);
  const KnownDesign design = known_design(inst);
  std::vector<double> z;
  z.reserve(data.size());
  for (const Triple& t : data.triples) {
    const double c = design_inner(design, t.x, inst.weight, inst.outcome_mean);
    z.push_back(ratio_at(design, t.x, t.a) * (t.y - inst.outcome_mean(t.x, t.a)) + c);
  }
  return summarize(z, "oracle", data.seed);
}

std::size_t first_half_size(std::size_t n) { return (n + 1) / 2; }

EstimateReport cross_fit_with(const Dataset& data, const KnownDesign& design,
                              const StateActionFn& mu1, const StateActionFn& mu2,
                              const std::string& estimator_id) {
  require_rows(data);
  const std::size_t n = data.size(), n1 = first_half_size(n);
  std::vector<double> z;
  z.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple& t = data.triples[i];
    const StateActionFn& mu = i < n1 ? mu2 : mu1;
    const double r = ratio_at(design, t.x, t.a);
    // f-hat(x,a) = g mu/pi - <g, mu>; its pi-average is zero by construction.
    const double fhat = r * mu(t.x, t.a) - design_inner(design, t.x, design.weight, mu);
    z.push_back(r * t.y - fhat);
  }
  return summarize(z, estimator_id, data.seed);
}

TwoStageResult two_stage_estimate(const Dataset& data, const KnownDesign& design,
                                  const FirstStageSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = data.size();
  if (n < 2 * static_cast<std::size_t>(spec.folds))
    throw Error("too-few-rows", "two-stage estimate needs n >= 2*folds");
  const std::size_t n1 = first_half_size(n);
  const std::vector<Triple> b1(data.triples.begin(), data.triples.begin() + n1);
  const std::vector<Triple> b2(data.triples.begin() + n1, data.triples.end());

  TwoStageResult out;
  try {
    out.model1 = fit_first_stage(b1, design, spec, derive_seed(seed, {1}));
  } catch (const Error& e) {
    throw Error(e.code(), std::string("first stage on fold 1: ") + e.what());
  }
  try {
    out.model2 = fit_first_stage(b2, design, spec, derive_seed(seed, {2}));
  } catch (const Error& e) {
    throw Error(e.code(), std::string("first stage on fold 2: ") + e.what());
  }
  const StateActionFn mu1 = out.model1.as_function();
  const StateActionFn mu2 = out.model2.as_function();
  out.report = cross_fit_with(data, design, mu1, mu2, "two-stage-" + spec.regressor_id);
  out.report.seed = seed;

  double acc = 0.0;
  for (const Triple& t : data.triples) {
    const double r = ratio_at(design, t.x, t.a);
    const double d = mu1(t.x, t.a) - mu2(t.x, t.a);
    acc += r * r * d * d;
  }
  out.fold_discrepancy = std::sqrt(acc / static_cast<double>(n));
  return out;
}

double asymptotic_variance_estimate(const Dataset& data, const StateActionFn& fitted,
                                    const KnownDesign& design) {
  require_rows(data);
  std::vector<double> z;
  z.reserve(data.size());
  for (const Triple& t : data.triples)
    z.push_back(ratio_at(design, t.x, t.a) * (t.y - fitted(t.x, t.a)) +
                design_inner(design, t.x, design.weight, fitted));
  return summarize(z, "influence", data.seed).plugin_variance;
}

}  // namespace ope
