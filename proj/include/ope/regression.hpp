#pragma once

// First-stage regressors for the weighted square loss
//   sum_i w_i (y_i - f(x_i))^2 (+ penalty),
// with w_i = g^2/pi^2 at the observed pair in the reweighted variants.
//
// Kernel ridge uses the Sobolev-1 kernel K(x,x') = min(x,x') on [0,1],
// whose RKHS is {f : f(0) = 0, f' in L2} with ||f||_H^2 = int f'^2. Setting
// the gradient of sum_i w_i (y_i - (K a)_i)^2 + lambda a'K a to zero gives
// K (W (K a - y) + lambda a) = 0, and a = (W K + lambda I)^{-1} W y solves
// it. The minimiser is a linear spline with knots at the inputs, flat after
// the last knot, so the same system is also a tridiagonal one in the knot
// values v_j:
//   W_j v_j + lambda [(v_j - v_{j-1})/h_j - (v_{j+1} - v_j)/h_{j+1}] = W_j ybar_j
// with v_0 = 0 at x = 0. Both solvers are provided.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ope/core.hpp"

namespace ope {

struct WeightedPoint {
  double x;
  double y;
  double w;
};

struct XYPoint {
  double x;
  double y;
};

struct SAPoint {
  double x;
  int a;
  double y;
  double w;
};

enum class KrrSolver { Automatic, Dense, Banded };

class KrrModel {
 public:
  KrrModel() = default;
  // Merges equal anchors; anchors must be >= 0.
  static KrrModel from_alpha(std::vector<double> anchors,
                             std::vector<double> alpha, double lambda);

  double operator()(double x) const;
  double lambda() const { return lambda_; }
  const std::vector<double>& anchors() const { return anchors_; }
  const std::vector<double>& alpha() const { return alpha_; }
  // ||f||_H^2 = a' K a
  double rkhs_norm_sq() const;
  double condition_estimate() const { return condition_; }
  bool used_fallback() const { return fallback_; }

 private:
  friend KrrModel fit_weighted_krr(const std::vector<WeightedPoint>&, double,
                                   const std::string&, KrrSolver);
  void finalize();

  std::vector<double> anchors_;
  std::vector<double> alpha_;
  std::vector<double> prefix_ax_;  // sum_{i<=j} alpha_i t_i
  std::vector<double> suffix_a_;   // sum_{i>=j} alpha_i
  double lambda_ = 0.0;
  double condition_ = 1.0;
  bool fallback_ = false;
};

KrrModel fit_weighted_krr(const std::vector<WeightedPoint>& points,
                          double lambda_reg,
                          const std::string& kernel_id = "sobolev1",
                          KrrSolver solver = KrrSolver::Automatic);
KrrModel fit_unweighted_krr(const std::vector<XYPoint>& points,
                            double lambda_reg,
                            const std::string& kernel_id = "sobolev1",
                            KrrSolver solver = KrrSolver::Automatic);
double krr_objective(const KrrModel& model,
                     const std::vector<WeightedPoint>& points);

struct FeatureMap {
  std::string id;
  std::size_t dim = 0;
  std::function<void(double x, int a, double* out)> fill;

  Eigen::VectorXd operator()(double x, int a) const;
};

// Built-in maps: "const", "x", "affine", "affine-by-action" (needs actions),
// "onehot-sa" (needs actions and a finite state list).
FeatureMap make_feature_map(const std::string& id,
                            const std::vector<int>& actions = {},
                            const std::vector<double>& states = {});

struct LinearModel {
  FeatureMap features;
  Eigen::VectorXd theta;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool warning = false;  // l1 fit stopped without meeting the KKT target

  double operator()(double x, int a) const;
};

double linear_objective(const LinearModel& model,
                        const std::vector<SAPoint>& points);

LinearModel fit_weighted_linear(
    const std::vector<SAPoint>& points, const FeatureMap& features,
    double ridge, double l2_radius = std::numeric_limits<double>::infinity());

struct L1Options {
  double rel_tol = 1e-10;
  int max_iter = 10000;
  double kkt_target = 1e-6;
};

LinearModel fit_l1_constrained(const std::vector<SAPoint>& points,
                               const FeatureMap& features, double radius,
                               const L1Options& opt = {});

// Euclidean projection onto {||theta||_1 <= radius}.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius);

class IsotonicModel {
 public:
  IsotonicModel() = default;
  IsotonicModel(std::vector<double> knots, std::vector<double> levels,
                bool clamp)
      : knots_(std::move(knots)), levels_(std::move(levels)), clamp_(clamp) {}

  // Right-continuous step function: level of the last knot <= t.
  double operator()(double t) const;
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& levels() const { return levels_; }

 private:
  std::vector<double> knots_;
  std::vector<double> levels_;
  bool clamp_ = false;
};

IsotonicModel fit_weighted_isotonic(const std::vector<WeightedPoint>& points,
                                    bool clamp = false);

struct FirstStageSpec {
  std::string regressor_id = "weighted-krr";
  std::vector<double> grid = {1.0};  // lambda for KRR, ridge for linear
  int folds = 5;
  std::string feature_map = "x";
  std::vector<double> feature_states;  // for "onehot-sa"
  double radius = 1.0;                 // l1 radius
  double l2_radius = std::numeric_limits<double>::infinity();
  bool clamp = false;

  void validate() const;
};

// Default CV grid: 13 log-spaced values over [0.1, 100].
std::vector<double> default_lambda_grid();

class FirstStageModel {
 public:
  std::string regressor_id;
  double lambda_m = 0.0;
  std::vector<double> train_weights;

  double operator()(double x, int a) const;
  StateActionFn as_function() const;
  std::string serialize() const;
  bool warning() const;

  // Per-action pieces; an action with no positive-weight rows maps to 0.
  std::vector<int> actions;
  std::vector<std::optional<KrrModel>> krr;
  std::vector<std::optional<IsotonicModel>> isotonic;
  std::optional<LinearModel> linear;
};

// Training weights for a row under the given regressor.
double first_stage_weight(const std::string& regressor_id,
                          const KnownDesign& design, double x, int a);

std::vector<SAPoint> weighted_rows(const std::vector<Triple>& rows,
                                   const KnownDesign& design,
                                   const std::string& regressor_id);

// Fits at a fixed regularization value.
FirstStageModel fit_first_stage_at(const std::vector<SAPoint>& points,
                                   const KnownDesign& design,
                                   const FirstStageSpec& spec, double lambda);

// Seeded shuffle, contiguous folds, weighted validation loss, ties to the
// larger value.
double cross_validate_lambda(const std::vector<SAPoint>& points,
                             const KnownDesign& design,
                             const FirstStageSpec& spec, std::uint64_t seed);

// Cross-validates (when the grid has more than one value) then refits.
FirstStageModel fit_first_stage(const std::vector<Triple>& rows,
                                const KnownDesign& design,
                                const FirstStageSpec& spec,
                                std::uint64_t seed);

}  // namespace ope
