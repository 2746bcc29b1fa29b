#include "ope/instances.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

#include "ope/error.hpp"

namespace ope {

namespace {

struct TableLookup {
  FiniteTables t;

  std::size_t state(double x) const {
    for (std::size_t i = 0; i < t.states.size(); ++i)
      if (t.states[i] == x) return i;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    throw Error("unknown-state", std::string("state ") + buf +
                                     " is not in the finite instance");
  }
  double at(const Table& tab, double x, int a) const {
    return tab[state(x)][t.actions.index_of(a)];
  }
};

void check_table(const Table& tab, std::size_t rows, std::size_t cols,
                 const char* name) {
  if (tab.size() != rows)
    throw Error("invalid-instance", std::string(name) + " has wrong row count");
  for (const auto& r : tab)
    if (r.size() != cols)
      throw Error("invalid-instance",
                  std::string(name) + " has wrong column count");
}

}  // namespace

ProblemInstance finite_table_instance(const std::string& id,
                                      const FiniteTables& t) {
  const std::size_t S = t.states.size(), K = t.actions.size();
  check_table(t.propensity, S, K, "propensity");
  check_table(t.weight, S, K, "weight");
  check_table(t.mean, S, K, "mean");
  check_table(t.sd, S, K, "sd");
  auto lk = std::make_shared<const TableLookup>(TableLookup{t});
  ProblemInstance inst;
  inst.id = id;
  inst.states = StateDistribution::finite(t.states, t.probs);
  inst.actions = t.actions;
  inst.propensity = [lk](double x, int a) { return lk->at(lk->t.propensity, x, a); };
  inst.weight = [lk](double x, int a) { return lk->at(lk->t.weight, x, a); };
  inst.outcome_mean = [lk](double x, int a) { return lk->at(lk->t.mean, x, a); };
  inst.outcome_sd = [lk](double x, int a) { return lk->at(lk->t.sd, x, a); };
  inst.validate();
  return inst;
}

ProblemInstance d1_instance(double sd) {
  FiniteTables t;
  t.states = {0.0, 1.0};
  t.probs = {0.5, 0.5};
  t.actions = ActionSpace::counting({0, 1});
  t.propensity = {{0.8, 0.2}, {0.4, 0.6}};
  t.weight = {{-1.0, 1.0}, {-1.0, 1.0}};
  t.mean = {{1.0, 2.0}, {0.0, 3.0}};
  t.sd = {{sd, sd}, {sd, sd}};
  char buf[64];
  std::snprintf(buf, sizeof buf, "d1(sd=%g)", sd);
  return finite_table_instance(buf, t);
}

double missing_data_propensity(PropensityShape shape, double pi_min, double x) {
  const double amp = 0.5 - pi_min;
  if (shape == PropensityShape::Pi1)
    return 0.5 - amp * std::sin(std::numbers::pi * x);
  return 0.5 - amp * std::sin(std::numbers::pi * x / 2.0);
}

double tent(double x) { return 0.5 - std::fabs(x - 0.5); }

std::string missing_data_id(const MissingDataParams& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "missing-data(pi=%s;gamma=%g;sigma0=%g;pi_min=%g)",
                p.shape == PropensityShape::Pi1 ? "pi1" : "pi2", p.gamma,
                p.sigma0, p.pi_min);
  return buf;
}

ProblemInstance missing_data_instance(const MissingDataParams& p) {
  if (!(p.gamma >= 0.0 && p.gamma <= 1.0))
    throw Error("invalid-config", "gamma must lie in [0,1]");
  if (!(p.pi_min > 0.0 && p.pi_min <= 0.5))
    throw Error("invalid-config", "pi_min must lie in (0, 0.5]");
  if (p.sigma0 < 0.0) throw Error("invalid-config", "sigma0 must be >= 0");
  const PropensityShape shape = p.shape;
  const double pi_min = p.pi_min, gamma = p.gamma, sigma0 = p.sigma0;
  ProblemInstance inst;
  inst.id = missing_data_id(p);
  inst.states = StateDistribution::uniform01();
  inst.actions = ActionSpace::counting({0, 1});
  inst.propensity = [shape, pi_min](double x, int a) {
    const double p1 = missing_data_propensity(shape, pi_min, x);
    return a == 1 ? p1 : 1.0 - p1;
  };
  inst.weight = [](double, int a) { return a == 1 ? 1.0 : 0.0; };
  inst.outcome_mean = [](double x, int a) { return a == 1 ? tent(x) : 0.0; };
  inst.outcome_sd = [shape, pi_min, gamma, sigma0](double x, int a) {
    if (a != 1) return 0.0;
    const double p1 = missing_data_propensity(shape, pi_min, x);
    return sigma0 * std::pow(p1, 0.5 * gamma);
  };
  inst.validate();
  return inst;
}

}  // namespace ope
