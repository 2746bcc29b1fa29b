#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ope/quadrature.hpp"
#include "ope/rng.hpp"

namespace ope {

using StateActionFn = std::function<double(double x, int a)>;

struct ActionSpace {
  std::vector<int> actions;
  std::vector<double> base_weights;  // lambda(a), all 1 for counting measure

  static ActionSpace counting(std::vector<int> actions);
  std::size_t size() const { return actions.size(); }
  bool contains(int a) const;
  std::size_t index_of(int a) const;
  void validate() const;
};

struct StateDistribution {
  enum class Kind { Finite, Continuous1D };

  Kind kind = Kind::Finite;
  std::vector<double> states;
  std::vector<double> probs;
  // Continuous case: density on [0,1] and its quantile function.
  std::function<double(double)> density;
  std::function<double(double)> quantile;

  static StateDistribution finite(std::vector<double> states,
                                  std::vector<double> probs);
  static StateDistribution continuous(std::function<double(double)> density,
                                      std::function<double(double)> quantile);
  static StateDistribution uniform01();

  bool is_finite() const { return kind == Kind::Finite; }
  // All states when finite, 64 equispaced points of [0,1] otherwise.
  std::vector<double> probe_states() const;
  double sample(Rng& rng) const;
  void validate() const;
};

struct ProblemInstance {
  std::string id;
  StateDistribution states;
  ActionSpace actions;
  StateActionFn propensity;
  StateActionFn weight;
  StateActionFn outcome_mean;
  StateActionFn outcome_sd;

  // Throws ope::Error when normalization, overlap or sign constraints fail
  // on the probe states.
  void validate() const;
};

// The parts of an instance a data analyst knows: pi, g and lambda.
struct KnownDesign {
  ActionSpace actions;
  StateActionFn propensity;
  StateActionFn weight;
};

KnownDesign known_design(const ProblemInstance& inst);

// A function of (x, a), optionally flagged as having zero conditional mean
// under pi: sum_a lambda(a) pi(x,a) h(x,a) = 0 for every x.
struct StateActionFunction {
  StateActionFn fn;
  bool zero_conditional_mean = false;

  StateActionFunction() = default;
  StateActionFunction(StateActionFn f, bool zero_mean = false)
      : fn(std::move(f)), zero_conditional_mean(zero_mean) {}
  double operator()(double x, int a) const { return fn(x, a); }
};

StateActionFunction constant_function(double c);

// Largest |<h(x,.), pi(x,.)>_lambda| over the probe states.
double conditional_mean_residual(const ProblemInstance& inst,
                                 const StateActionFn& h);

// Sets the flag after checking it on the probe grid (tolerance 1e-8).
StateActionFunction make_zero_mean(const ProblemInstance& inst,
                                   StateActionFn h);

struct Triple {
  double x;
  int a;
  double y;
};

struct Dataset {
  std::vector<Triple> triples;
  std::uint64_t seed = 0;
  std::string instance_id;

  std::size_t size() const { return triples.size(); }
};

Dataset sample_dataset(const ProblemInstance& inst, std::size_t n,
                       std::uint64_t seed);

// sum_a lambda(a) f1(x,a) f2(x,a)
double action_inner(const ProblemInstance& inst, double x,
                    const StateActionFn& f1, const StateActionFn& f2);
// <f(x,.), pi(x,.)>_lambda
double propensity_inner(const ProblemInstance& inst, double x,
                        const StateActionFn& f);

// E over the state law of phi(X): enumeration or adaptive quadrature.
double expect_state(const ProblemInstance& inst,
                    const std::function<double(double)>& phi,
                    const QuadratureOptions& opt = {});

double true_functional(const ProblemInstance& inst);
double weighted_norm_sq(const ProblemInstance& inst,
                        const StateActionFunction& h);
double weighted_norm(const ProblemInstance& inst, const StateActionFunction& h);
double efficient_variance(const ProblemInstance& inst);
StateActionFunction optimal_auxiliary(const ProblemInstance& inst);

// n * Var of the generic estimator at a zero-conditional-mean f:
// Var<g,mu*> + sum_a lambda E[sigma^2 g^2/pi] + sum_a lambda E[pi (f - g mu*/pi + <g,mu*>)^2]
double exact_variance(const ProblemInstance& inst, const StateActionFunction& f);

struct ExcessVariance {
  double v2 = 0.0;     // E[ Var_A( g/pi (mu*-mubar) | X ) ]
  double delta = 0.0;  // E[ <g, mu*-mubar>^2 ] = ||mubar-mu*||^2 - v2
};
ExcessVariance excess_variance(const ProblemInstance& inst,
                               const StateActionFunction& mubar);

// CSV with a two-line comment header (seed, instance_id) then x,a,y.
void write_dataset_csv(const Dataset& data, std::ostream& os);
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(std::istream& is);
Dataset read_dataset_csv(const std::string& path);

}  // namespace ope
