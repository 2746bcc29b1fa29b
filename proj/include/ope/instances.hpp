#pragma once

#include <string>
#include <vector>

#include "ope/core.hpp"

namespace ope {

using Table = std::vector<std::vector<double>>;  // [state index][action index]

struct FiniteTables {
  std::vector<double> states;
  std::vector<double> probs;
  ActionSpace actions;
  Table propensity, weight, mean, sd;
};

// Looks states up by exact value; evaluating at an unknown state throws.
ProblemInstance finite_table_instance(const std::string& id,
                                      const FiniteTables& t);

// Two states, two actions, ATE weight g = 2a-1; sd is a constant.
ProblemInstance d1_instance(double sd = 0.0);

enum class PropensityShape { Pi1, Pi2 };

struct MissingDataParams {
  PropensityShape shape = PropensityShape::Pi1;
  double gamma = 0.0;
  double sigma0 = 1.0;
  double pi_min = 0.005;
};

// pi(x,1) for the two built-in shapes.
double missing_data_propensity(PropensityShape shape, double pi_min, double x);
double tent(double x);

// Uniform X on [0,1], g(x,a) = a, mu*(x,1) = tent, sigma^2(x,1) = sigma0^2 pi^gamma.
ProblemInstance missing_data_instance(const MissingDataParams& p);
std::string missing_data_id(const MissingDataParams& p);

}  // namespace ope
