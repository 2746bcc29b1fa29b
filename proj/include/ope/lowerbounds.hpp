#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ope/core.hpp"

namespace ope {

struct FiniteDistribution {
  std::vector<double> atoms;  // labels; may be empty for index-labelled products
  std::vector<double> probs;

  FiniteDistribution() = default;
  FiniteDistribution(std::vector<double> atoms_, std::vector<double> probs_);

  std::size_t size() const { return probs.size(); }
  void validate() const;  // probs >= 0, sum within 1e-12
};

// k-fold product law on index-labelled atoms (row-major over factors).
FiniteDistribution product(const FiniteDistribution& p, const FiniteDistribution& q);
FiniteDistribution power(const FiniteDistribution& p, int k);

enum class DivergenceKind { KL, CHI2, TV };
// KL(p||q), chi^2(p||q) and TV on a shared atom list.
double divergence(DivergenceKind kind, const FiniteDistribution& p, const FiniteDistribution& q);

// sqrt(E X^4) / E X^2 for a finite law; 0/0 is reported as 0.
double moment_ratio(const std::vector<double>& values, const std::vector<double>& probs);

struct TiltedReport {
  bool degenerate = false;
  double s = 0.0;
  double h_norm = 0.0;  // ||h||_{L2(xi*)}
  double htr_norm = 0.0;
  double htr_sup = 0.0;
  double m_prime = 0.0;  // (2,4)-moment ratio of h
  std::vector<double> h, h_tr;
  FiniteDistribution tilted;
  double chi2 = 0.0;
  double chi2_bound = 0.0;  // 1/(8n)
  bool chi2_ok = false;
  double gap = 0.0;  // tau(xi_s, mu*) - tau(xi*, mu*)
  double gap_bound = 0.0;  // ||h|| / (16 sqrt n)
  bool gap_applicable = false;  // n >= 4 M'^2
  bool gap_ok = false;
  bool sandwich_ok = false;  // exp(-s|h_tr|_inf) <= Z_s <= exp(s|h_tr|_inf)
  // xi_s/xi* = exp(s h_tr)/Z_s lies within exp(+-2 s|h_tr|_inf); the one-factor
  // version is reported separately since it fails whenever Z_s != 1 pulls the wrong way
  bool ratio_ok = false;
  bool ratio_one_factor_ok = false;
};

TiltedReport tilted_instance(const ProblemInstance& inst, int n);

struct SigmaPairReport {
  double s = 0.0;
  double sigma_norm = 0.0;  // ||sigma||_omega
  double gap = 0.0;         // tau(mu_{+s}) - tau(mu_{-s})
  double gap_expected = 0.0;  // ||sigma||_omega / (2 sqrt n)
  // E over (X,A) of the per-pair Gaussian KL: displayed form 4 s^2 g^2 sigma^2/pi^2
  // and the exact (mu+ - mu-)^2 / (2 sigma^2) = 2 s^2 g^2 sigma^2/pi^2.
  double kl_pair_displayed = 0.0;
  double kl_pair_exact = 0.0;
  double kl_n_displayed = 0.0;  // 4 n s^2 ||sigma||^2 = 1/4
  double kl_n_exact = 0.0;      // 2 n s^2 ||sigma||^2 = 1/8
  double tv_bound = 0.0;        // Pinsker on the displayed n-sample KL
  bool neighborhood_checked = false;
  bool within_neighborhood = true;
  std::vector<std::vector<double>> mu_plus, mu_minus;  // [state][action]
};

// delta, when given, is the neighbourhood size checked against s |g| sigma^2 / pi.
SigmaPairReport sigma_perturbed_pair(const ProblemInstance& inst, int n,
                                     const StateActionFn& delta = {});

struct MixtureReport {
  double s = 0.0;
  double s_cap = 0.0;       // 1 / (2 M)
  double m_ratio = 0.0;     // (2,4)-moment ratio of g delta / pi
  double delta_norm = 0.0;  // ||delta||_omega
  std::vector<std::vector<double>> rho;  // [state][action]
  std::size_t truncated_atoms = 0;
  double tau_star = 0.0;
  double gap_exact = 0.0;      // E_{Q1} tau - E_{Q-1} tau = 2 s E sum_a g delta rho
  double gap_displayed = 0.0;  // s ||delta|| / 2, the displayed lower bound
  double gap_mc = 0.0;
  double gap_mc_se = 0.0;
  int reps = 0;
  // Hoeffding: V = sum_{x,a} (xi(x) lambda(a) g delta)^2, half width sqrt(t V) at t = 2.
  double hoeffding_v = 0.0;
  double half_width = 0.0;
  double coverage_displayed = 0.0;  // 1 - 2 e^{-2t}
  double coverage_hoeffding = 0.0;  // 1 - 2 e^{-t/2}
  double empirical_coverage = 0.0;  // fraction of draws within the half width
};

// tau(xi*, mu_zeta) with mu_zeta = mu* + zeta delta; signs[state][action] in {-1,+1}.
double signed_functional(const ProblemInstance& inst, const StateActionFn& delta,
                         const std::vector<std::vector<int>>& signs);

MixtureReport delta_mixture(const ProblemInstance& inst, const StateActionFn& delta, double s,
                            int reps, std::uint64_t seed);

struct TruncationCheck {
  double m_ratio = 0.0;
  double truncated_second_moment = 0.0;  // E[X^2 1{|X| <= 2 M sqrt(E X^2)}]
  double second_moment = 0.0;
  bool holds = false;
};
TruncationCheck check_truncation_lemma(const std::vector<double>& values,
                                       const std::vector<double>& probs);

struct ConditionalTvCheck {
  double eps = 0.0;
  double tv = 0.0;
  double tv_conditional = 0.0;
  bool lower_holds = false;  // tv - 4 eps <= tv_conditional
  bool upper_holds = false;  // tv_conditional <= tv / (1 - eps) + 2 eps
};
// event[i] marks the atoms in E; requires eps = 1 - min(mu(E), nu(E)) <= 1/4.
ConditionalTvCheck check_conditional_tv(const FiniteDistribution& mu,
                                        const FiniteDistribution& nu,
                                        const std::vector<bool>& event);

nlohmann::json to_json(const TiltedReport& r);
nlohmann::json to_json(const SigmaPairReport& r);
nlohmann::json to_json(const MixtureReport& r);

}  // namespace ope
