#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ope/core.hpp"
#include "ope/regression.hpp"

namespace ope {

struct McEstimate {
  double estimate = 0.0;
  double se = 0.0;
  int reps = 0;
};

// (F - center) intersected with the omega-ball of radius r, for classes whose
// data-conditional supremum has a closed form.
struct LocalizedClassSpec {
  enum class Kind { LinearEllipsoid, L1Ball, SingletonZero };
  Kind kind = Kind::SingletonZero;
  FeatureMap features;    // LinearEllipsoid, L1Ball
  Eigen::MatrixXd sigma;  // LinearEllipsoid: the omega-Gram matrix of the features
  double radius = 1.0;    // localization radius r
  double l1_radius = 1.0; // L1Ball: sup over |theta|_1 <= R1, localization dropped
  StateActionFn center;   // used by the custom multiplier; empty means zero

  static LocalizedClassSpec singleton_zero();
  static LocalizedClassSpec linear_ellipsoid(FeatureMap fm, Eigen::MatrixXd sigma, double r);
  static LocalizedClassSpec l1_ball(FeatureMap fm, double l1_radius);

  LocalizedClassSpec with_radius(double r) const;
  void validate() const;
};

// Sigma = E sum_a lambda g^2/pi phi phi^T, so that ||<theta,phi>||_omega^2 = theta^T Sigma theta.
Eigen::MatrixXd omega_gram(const ProblemInstance& inst, const FeatureMap& fm);
// Gamma_sigma = E sum_a lambda g^4 sigma^2 / pi^3 phi phi^T
Eigen::MatrixXd noise_gram(const ProblemInstance& inst, const FeatureMap& fm);

// sup over the class of <theta, v> for a score vector v (already divided by m).
double class_supremum(const LocalizedClassSpec& spec, const Eigen::VectorXd& v);

enum class Multiplier { OutcomeNoise, Custom };

// sqrt of E[ sup_f { (1/m) sum eps_i g^2/pi^2 w_i f }^2 ] with
// w = Y - mu* (OutcomeNoise) or w = mu* - center (Custom).
// Standard error by the delta method.
McEstimate rademacher_S_mc(const ProblemInstance& inst, const LocalizedClassSpec& spec,
                           std::size_t m, Multiplier multiplier, int reps,
                           std::uint64_t seed);

// E[ sup_f (1/m) sum eps_i g/pi f ]
McEstimate rademacher_R_mc(const ProblemInstance& inst, const LocalizedClassSpec& spec,
                           std::size_t m, int reps, std::uint64_t seed);

struct ProfilePoint {
  double r = 0.0;
  double estimate = 0.0;
  double se = 0.0;
};

// R_m(r) over a radius grid; each radius gets its own substream.
std::vector<ProfilePoint> rademacher_R_profile(const ProblemInstance& inst,
                                               const LocalizedClassSpec& spec, std::size_t m,
                                               const std::vector<double>& radii, int reps,
                                               std::uint64_t seed);
void write_profile_csv(const std::vector<ProfilePoint>& profile, std::ostream& os);

// True when estimate/r is non-increasing in r up to `ses` combined standard errors.
bool ratio_non_increasing(const std::vector<ProfilePoint>& profile, double ses = 3.0);

enum class RadiusKind { S, R };
enum class ComplexitySource { MonteCarlo, ClosedFormLinear };

struct CriticalRadiusOptions {
  RadiusKind kind = RadiusKind::S;
  ComplexitySource source = ComplexitySource::MonteCarlo;
  double alpha1 = 0.0;  // required for kind R
  double alpha2 = 0.0;
  double tolerance = 1e-4;
  double r_max = 1e6;
  int reps = 10000;
  std::uint64_t seed = 1;
  Multiplier multiplier = Multiplier::OutcomeNoise;
};

struct CriticalRadiusResult {
  double radius = 0.0;  // +inf when no finite solution exists
  int evaluations = 0;
};

CriticalRadiusResult critical_radius(const ProblemInstance& inst,
                                     const LocalizedClassSpec& family, std::size_t m,
                                     const CriticalRadiusOptions& opt);

// P[ |g h / pi|(X,A) >= alpha1 ||h||_omega ] by sampling (X, A).
McEstimate small_ball_estimate(const ProblemInstance& inst, const StateActionFunction& h,
                               double alpha1, int reps, std::uint64_t seed);

// Points x_i, thresholds t_i and scale delta such that for every sign
// pattern zeta the witness parameter beta(zeta) gives f_beta(x_i) = t_i + zeta_i delta.
struct ShatteringCertificate {
  std::string description;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> thresholds;
  double scale = 0.0;
  bool equality = true;
  std::function<Eigen::VectorXd(const std::vector<int>& zeta)> witness;  // zeta in {-1,+1}^D
  std::function<double(const Eigen::VectorXd& beta, const Eigen::VectorXd& x)> evaluate;
  std::function<bool(const Eigen::VectorXd& beta)> in_class;

  std::size_t dimension() const { return points.size(); }
};

struct CertificateCheck {
  std::size_t patterns = 0;
  bool exhaustive = false;
  double max_error = 0.0;
  bool witnesses_in_class = true;
  bool passed = false;
};

CertificateCheck verify_certificate(const ShatteringCertificate& cert, double tol = 1e-10,
                                    std::size_t exhaustive_limit = 16,
                                    std::size_t random_patterns = 10000,
                                    std::uint64_t seed = 1);

struct Link {
  std::string id;
  std::function<double(double)> phi;
  std::function<double(double)> inverse;
  double inverse_bound = 0.0;  // inverse defined on (-bound, bound); 0 means all of R
};

// "identity", "tanh", "cubic" (s + s^3)
Link make_link(const std::string& id);

ShatteringCertificate hadamard_glm_shatter(std::size_t p, const Link& link, double amplitude,
                                           double radius);

// Sylvester Hadamard matrix with entries +-1; columns are the points.
Eigen::MatrixXd hadamard_matrix(std::size_t p);

ShatteringCertificate sparse_packing_shatter(std::size_t p, std::size_t s);

}  // namespace ope
