#include "ope/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ope/error.hpp"

namespace ope {

namespace {

std::string fmt_state(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ActionSpace ActionSpace::counting(std::vector<int> actions) {
  ActionSpace out;
  out.base_weights.assign(actions.size(), 1.0);
  out.actions = std::move(actions);
  return out;
}

bool ActionSpace::contains(int a) const {
  for (int b : actions)
    if (b == a) return true;
  return false;
}

std::size_t ActionSpace::index_of(int a) const {
  for (std::size_t k = 0; k < actions.size(); ++k)
    if (actions[k] == a) return k;
  throw Error("unknown-action", "action " + std::to_string(a) +
                                    " is not in the action space");
}

void ActionSpace::validate() const {
  if (actions.empty()) throw Error("invalid-actions", "empty action space");
  if (base_weights.size() != actions.size())
    throw Error("invalid-actions", "base weight count differs from actions");
  for (double w : base_weights)
    if (!(w > 0.0))
      throw Error("invalid-actions", "base weights must be positive");
}

StateDistribution StateDistribution::finite(std::vector<double> states,
                                            std::vector<double> probs) {
  StateDistribution d;
  d.kind = Kind::Finite;
  d.states = std::move(states);
  d.probs = std::move(probs);
  d.validate();
  return d;
}

StateDistribution StateDistribution::continuous(
    std::function<double(double)> density,
    std::function<double(double)> quantile) {
  StateDistribution d;
  d.kind = Kind::Continuous1D;
  d.density = std::move(density);
  d.quantile = std::move(quantile);
  d.validate();
  return d;
}

StateDistribution StateDistribution::uniform01() {
  return continuous([](double) { return 1.0; }, [](double u) { return u; });
}

std::vector<double> StateDistribution::probe_states() const {
  if (is_finite()) return states;
  std::vector<double> grid(64);
  for (int i = 0; i < 64; ++i) grid[i] = i / 63.0;
  return grid;
}

double StateDistribution::sample(Rng& rng) const {
  const double u = rng.uniform();
  if (!is_finite()) return quantile(u);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return states[k];
  }
  // Rounding left u above the last partial sum; take the last positive atom.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return states[k];
  return states.back();
}

void StateDistribution::validate() const {
  if (is_finite()) {
    if (states.empty() || states.size() != probs.size())
      throw Error("invalid-states", "finite states and probabilities mismatch");
    double total = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw Error("invalid-states", "negative state probability");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-12)
      throw Error("invalid-states", "state probabilities sum to " +
                                        fmt_state(total));
    return;
  }
  if (!density || !quantile)
    throw Error("invalid-states", "continuous law needs density and quantile");
  for (double x : probe_states())
    if (density(x) < 0.0)
      throw Error("invalid-states", "negative density at x=" + fmt_state(x));
  const double mass = integrate(density, 0.0, 1.0).value;
  if (std::fabs(mass - 1.0) > 1e-8)
    throw Error("invalid-states", "density integrates to " + fmt_state(mass));
}

void ProblemInstance::validate() const {
  actions.validate();
  states.validate();
  if (!propensity || !weight || !outcome_mean || !outcome_sd)
    throw Error("invalid-instance", "instance " + id + " has unset functions");
  for (double x : states.probe_states()) {
    double total = 0.0;
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const int a = actions.actions[k];
      const double p = propensity(x, a);
      if (!(p > 0.0))
        throw Error("overlap", "propensity not positive at (x=" +
                                   fmt_state(x) + ", a=" + std::to_string(a) +
                                   ")");
      if (outcome_sd(x, a) < 0.0)
        throw Error("invalid-instance", "negative outcome sd at x=" +
                                            fmt_state(x));
      total += actions.base_weights[k] * p;
    }
    if (std::fabs(total - 1.0) > 1e-10)
      throw Error("normalization", "propensity sums to " + fmt_state(total) +
                                       " at x=" + fmt_state(x));
  }
}

KnownDesign known_design(const ProblemInstance& inst) {
  return {inst.actions, inst.propensity, inst.weight};
}

StateActionFunction constant_function(double c) {
  return StateActionFunction([c](double, int) { return c; });
}

double action_inner(const ProblemInstance& inst, double x,
                    const StateActionFn& f1, const StateActionFn& f2) {
  double s = 0.0;
  for (std::size_t k = 0; k < inst.actions.size(); ++k) {
    const int a = inst.actions.actions[k];
    s += inst.actions.base_weights[k] * f1(x, a) * f2(x, a);
  }
  return s;
}

double propensity_inner(const ProblemInstance& inst, double x,
                        const StateActionFn& f) {
  return action_inner(inst, x, f, inst.propensity);
}

double conditional_mean_residual(const ProblemInstance& inst,
                                 const StateActionFn& h) {
  double worst = 0.0;
  for (double x : inst.states.probe_states())
    worst = std::max(worst, std::fabs(propensity_inner(inst, x, h)));
  return worst;
}

StateActionFunction make_zero_mean(const ProblemInstance& inst,
                                   StateActionFn h) {
  const double r = conditional_mean_residual(inst, h);
  if (r > 1e-8)
    throw Error("not-zero-mean",
                "conditional mean reaches " + fmt_state(r) + " on the probe grid");
  return StateActionFunction(std::move(h), true);
}

Dataset sample_dataset(const ProblemInstance& inst, std::size_t n,
                       std::uint64_t seed) {
  if (n == 0) throw Error("invalid-argument", "sample size must be positive");
  Dataset data;
  data.seed = seed;
  data.instance_id = inst.id;
  data.triples.reserve(n);
  Rng rng(seed);
  const std::size_t K = inst.actions.size();
  std::vector<double> cum(K);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = inst.states.sample(rng);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double p = inst.propensity(x, inst.actions.actions[k]);
      if (!(p >= 0.0))
        throw Error("normalization", "invalid propensity at state x=" +
                                         fmt_state(x));
      total += inst.actions.base_weights[k] * p;
      cum[k] = total;
    }
    if (std::fabs(total - 1.0) > 1e-10)
      throw Error("normalization", "propensity sums to " + fmt_state(total) +
                                       " at sampled state x=" + fmt_state(x));
    const double u = rng.uniform() * total;
    std::size_t k = 0;
    while (k + 1 < K && u >= cum[k]) ++k;
    const int a = inst.actions.actions[k];
    const double z = rng.normal();
    const double sd = inst.outcome_sd(x, a);
    const double mu = inst.outcome_mean(x, a);
    data.triples.push_back({x, a, sd == 0.0 ? mu : mu + sd * z});
  }
  return data;
}

double expect_state(const ProblemInstance& inst,
                    const std::function<double(double)>& phi,
                    const QuadratureOptions& opt) {
  const StateDistribution& s = inst.states;
  if (s.is_finite()) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.states.size(); ++k)
      if (s.probs[k] > 0.0) acc += s.probs[k] * phi(s.states[k]);
    return acc;
  }
  return integrate([&](double x) { return s.density(x) * phi(x); }, 0.0, 1.0,
                   opt)
      .value;
}

double true_functional(const ProblemInstance& inst) {
  return expect_state(inst, [&](double x) {
    return action_inner(inst, x, inst.weight, inst.outcome_mean);
  });
}

double weighted_norm_sq(const ProblemInstance& inst,
                        const StateActionFunction& h) {
  return expect_state(inst, [&](double x) {
    double s = 0.0;
    for (std::size_t k = 0; k < inst.actions.size(); ++k) {
      const int a = inst.actions.actions[k];
      const double g = inst.weight(x, a);
      const double v = h(x, a);
      s += inst.actions.base_weights[k] * g * g / inst.propensity(x, a) * v * v;
    }
    return s;
  });
}

double weighted_norm(const ProblemInstance& inst,
                     const StateActionFunction& h) {
  return std::sqrt(weighted_norm_sq(inst, h));
}

double efficient_variance(const ProblemInstance& inst) {
  auto contrast = [&](double x) {
    return action_inner(inst, x, inst.weight, inst.outcome_mean);
  };
  const double m1 = expect_state(inst, contrast);
  const double m2 =
      expect_state(inst, [&](double x) { return contrast(x) * contrast(x); });
  const double between = std::max(0.0, m2 - m1 * m1);
  return between + weighted_norm_sq(inst, StateActionFunction(inst.outcome_sd));
}

StateActionFunction optimal_auxiliary(const ProblemInstance& inst) {
  // Copies of the callables keep the result valid after inst goes away.
  ProblemInstance copy = inst;
  auto f = [copy](double x, int a) {
    const double c = action_inner(copy, x, copy.weight, copy.outcome_mean);
    return copy.weight(x, a) * copy.outcome_mean(x, a) /
               copy.propensity(x, a) -
           c;
  };
  return make_zero_mean(inst, f);
}

double exact_variance(const ProblemInstance& inst,
                      const StateActionFunction& f) {
  if (!f.zero_conditional_mean)
    throw Error("not-zero-mean",
                "exact variance formula needs a zero-conditional-mean f");
  const double mismatch = expect_state(inst, [&](double x) {
    const double c = action_inner(inst, x, inst.weight, inst.outcome_mean);
    double s = 0.0;
    for (std::size_t k = 0; k < inst.actions.size(); ++k) {
      const int a = inst.actions.actions[k];
      const double p = inst.propensity(x, a);
      const double d = f(x, a) - inst.weight(x, a) * inst.outcome_mean(x, a) / p + c;
      s += inst.actions.base_weights[k] * p * d * d;
    }
    return s;
  });
  return efficient_variance(inst) + mismatch;
}

ExcessVariance excess_variance(const ProblemInstance& inst,
                               const StateActionFunction& mubar) {
  ExcessVariance out;
  out.v2 = expect_state(inst, [&](double x) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < inst.actions.size(); ++k) {
      const int a = inst.actions.actions[k];
      const double p = inst.actions.base_weights[k] * inst.propensity(x, a);
      const double z = inst.weight(x, a) / inst.propensity(x, a) *
                       (inst.outcome_mean(x, a) - mubar(x, a));
      m1 += p * z;
      m2 += p * z * z;
    }
    return std::max(0.0, m2 - m1 * m1);
  });
  out.delta = expect_state(inst, [&](double x) {
    double c = 0.0;
    for (std::size_t k = 0; k < inst.actions.size(); ++k) {
      const int a = inst.actions.actions[k];
      c += inst.actions.base_weights[k] * inst.weight(x, a) *
           (inst.outcome_mean(x, a) - mubar(x, a));
    }
    return c * c;
  });
  return out;
}

void write_dataset_csv(const Dataset& data, std::ostream& os) {
  os << "# seed=" << data.seed << "\n";
  os << "# instance_id=" << data.instance_id << "\n";
  os << "x,a,y\n";
  char buf[128];
  for (const Triple& t : data.triples) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g\n", t.x, t.a, t.y);
    os << buf;
  }
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io", "cannot open " + path + " for writing");
  write_dataset_csv(data, os);
  if (!os) throw Error("io", "write failed for " + path);
}

Dataset read_dataset_csv(std::istream& is) {
  Dataset data;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(1);
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      std::string key = body.substr(0, eq);
      key.erase(0, key.find_first_not_of(' '));
      const std::string value = body.substr(eq + 1);
      if (key == "seed") data.seed = std::stoull(value);
      if (key == "instance_id") data.instance_id = value;
      continue;
    }
    if (!header) {
      if (line != "x,a,y")
        throw Error("parse", "expected header x,a,y at line " +
                                 std::to_string(lineno));
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string fx, fa, fy;
    if (!std::getline(ss, fx, ',') || !std::getline(ss, fa, ',') ||
        !std::getline(ss, fy))
      throw Error("parse", "malformed row at line " + std::to_string(lineno));
    try {
      data.triples.push_back({std::stod(fx), std::stoi(fa), std::stod(fy)});
    } catch (const std::exception&) {
      throw Error("parse", "non-numeric field at line " +
                               std::to_string(lineno));
    }
  }
  if (data.triples.empty()) throw Error("parse", "dataset has no rows");
  return data;
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io", "cannot open " + path);
  return read_dataset_csv(is);
}

}  // namespace ope
