#include "ope/lowerbounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ope/error.hpp"
#include "ope/rng.hpp"

namespace ope {

namespace {

const StateDistribution& finite_states(const ProblemInstance& inst, const char* who) {
  if (!inst.states.is_finite())
    throw Error("not-finite", std::string(who) + " needs a finite state space");
  return inst.states;
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::string atom_name(const FiniteDistribution& p, std::size_t i) {
  char buf[96];
  if (p.atoms.size() == p.probs.size())
    std::snprintf(buf, sizeof buf, "atom %zu (label %.17g)", i, p.atoms[i]);
  else
    std::snprintf(buf, sizeof buf, "atom %zu", i);
  return buf;
}

}  // namespace

FiniteDistribution::FiniteDistribution(std::vector<double> atoms_, std::vector<double> probs_)
    : atoms(std::move(atoms_)), probs(std::move(probs_)) {
  validate();
}

void FiniteDistribution::validate() const {
  if (probs.empty()) throw Error("bad-distribution", "distribution has no atoms");
  if (!atoms.empty() && atoms.size() != probs.size())
    throw Error("bad-distribution", "atom and probability lists differ in length");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw Error("bad-distribution", "probabilities must be finite and >= 0");
    s += p;
  }
  if (std::fabs(s - 1.0) > 1e-12) throw Error("bad-distribution", "probabilities must sum to 1");
}

FiniteDistribution product(const FiniteDistribution& p, const FiniteDistribution& q) {
  FiniteDistribution r;
  r.probs.reserve(p.size() * q.size());
  for (double a : p.probs)
    for (double b : q.probs) r.probs.push_back(a * b);
  return r;
}

FiniteDistribution power(const FiniteDistribution& p, int k) {
  if (k < 1) throw Error("bad-argument", "power needs k >= 1");
  FiniteDistribution r;
  r.probs = p.probs;
  for (int i = 1; i < k; ++i) r = product(r, p);
  return r;
}

double divergence(DivergenceKind kind, const FiniteDistribution& p, const FiniteDistribution& q) {
  if (p.size() != q.size()) throw Error("support-mismatch", "distributions have different atom sets");
  if (p.atoms.size() == p.probs.size() && q.atoms.size() == q.probs.size() && p.atoms != q.atoms)
    throw Error("support-mismatch", "distributions have different atom labels");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.probs[i], b = q.probs[i];
    switch (kind) {
      case DivergenceKind::TV:
        acc += std::fabs(a - b);
        break;
      case DivergenceKind::KL:
        if (a == 0.0) break;
        if (b == 0.0) throw Error("support", "KL infinite: q vanishes at " + atom_name(p, i));
        acc += a * std::log(a / b);
        break;
      case DivergenceKind::CHI2:
        if (b == 0.0) {
          if (a == 0.0) break;
          throw Error("support", "chi-square infinite: q vanishes at " + atom_name(p, i));
        }
        acc += (a - b) * (a - b) / b;
        break;
    }
  }
  if (kind == DivergenceKind::TV) acc *= 0.5;
  return std::max(0.0, acc);
}

double moment_ratio(const std::vector<double>& values, const std::vector<double>& probs) {
  double m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v2 = values[i] * values[i];
    m2 += probs[i] * v2;
    m4 += probs[i] * v2 * v2;
  }
  return m2 > 0.0 ? std::sqrt(m4) / m2 : 0.0;
}

TiltedReport tilted_instance(const ProblemInstance& inst, int n) {
  const StateDistribution& sd = finite_states(inst, "tilted_instance");
  if (n < 1) throw Error("bad-argument", "n must be >= 1");
  const std::size_t S = sd.states.size();
  std::vector<double> H(S);
  double mean = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    H[i] = action_inner(inst, sd.states[i], inst.outcome_mean, inst.weight);
    mean += sd.probs[i] * H[i];
  }
  TiltedReport r;
  r.h.resize(S);
  double m2 = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    r.h[i] = H[i] - mean;
    m2 += sd.probs[i] * r.h[i] * r.h[i];
  }
  r.h_norm = std::sqrt(m2);
  r.chi2_bound = 1.0 / (8.0 * n);
  r.gap_bound = r.h_norm / (16.0 * std::sqrt(static_cast<double>(n)));
  if (!(m2 > 1e-24 * std::max(1.0, mean * mean))) {
    r.degenerate = true;
    r.h_norm = 0.0;
    r.gap_bound = 0.0;
    r.h_tr = r.h;
    r.tilted = FiniteDistribution(sd.states, sd.probs);
    r.chi2_ok = true;
    r.sandwich_ok = true;
    r.ratio_ok = true;
    r.ratio_one_factor_ok = true;
    return r;
  }

  r.m_prime = moment_ratio(r.h, sd.probs);
  const double thr = 2.0 * r.m_prime * r.h_norm;
  r.h_tr.resize(S);
  double t2 = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    // the "otherwise" branch clips to sgn(h) ||h||, without the 2M' factor
    r.h_tr[i] = std::fabs(r.h[i]) <= thr ? r.h[i] : sgn(r.h[i]) * r.h_norm;
    t2 += sd.probs[i] * r.h_tr[i] * r.h_tr[i];
    r.htr_sup = std::max(r.htr_sup, std::fabs(r.h_tr[i]));
  }
  r.htr_norm = std::sqrt(t2);
  r.s = 1.0 / (4.0 * r.htr_norm * std::sqrt(static_cast<double>(n)));

  std::vector<double> w(S);
  double Z = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    w[i] = sd.probs[i] * std::exp(r.s * r.h_tr[i]);
    Z += w[i];
  }
  for (double& v : w) v /= Z;
  r.tilted.atoms = sd.states;
  r.tilted.probs = w;

  r.chi2 = divergence(DivergenceKind::CHI2, r.tilted, FiniteDistribution(sd.states, sd.probs));
  r.chi2_ok = r.chi2 <= r.chi2_bound;
  double gap = 0.0;
  for (std::size_t i = 0; i < S; ++i) gap += w[i] * r.h[i];
  r.gap = gap;
  r.gap_applicable = n >= 4.0 * r.m_prime * r.m_prime;
  r.gap_ok = r.gap >= r.gap_bound;

  const double e = std::exp(r.s * r.htr_sup);
  const double slack = 1e-12;
  r.sandwich_ok = Z >= (1.0 / e) * (1.0 - slack) && Z <= e * (1.0 + slack);
  r.ratio_ok = true;
  r.ratio_one_factor_ok = true;
  for (std::size_t i = 0; i < S; ++i) {
    if (sd.probs[i] == 0.0) continue;
    const double ratio = w[i] / sd.probs[i];
    if (ratio < (1.0 / (e * e)) * (1.0 - slack) || ratio > e * e * (1.0 + slack)) r.ratio_ok = false;
    if (ratio < (1.0 / e) * (1.0 - slack) || ratio > e * (1.0 + slack)) r.ratio_one_factor_ok = false;
  }
  return r;
}

SigmaPairReport sigma_perturbed_pair(const ProblemInstance& inst, int n,
                                     const StateActionFn& delta) {
  const StateDistribution& sd = finite_states(inst, "sigma_perturbed_pair");
  if (n < 1) throw Error("bad-argument", "n must be >= 1");
  const ActionSpace& A = inst.actions;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < sd.states.size(); ++i) {
    const double x = sd.states[i];
    for (std::size_t k = 0; k < A.size(); ++k) {
      const int a = A.actions[k];
      const double g = inst.weight(x, a), s = inst.outcome_sd(x, a);
      norm2 += sd.probs[i] * A.base_weights[k] * g * g * s * s / inst.propensity(x, a);
    }
  }
  if (!(norm2 > 0.0)) throw Error("zero-norm", "sigma perturbation needs ||sigma||_omega > 0");

  SigmaPairReport r;
  r.sigma_norm = std::sqrt(norm2);
  const double rn = std::sqrt(static_cast<double>(n));
  r.s = 1.0 / (4.0 * r.sigma_norm * rn);
  r.gap_expected = r.sigma_norm / (2.0 * rn);
  r.neighborhood_checked = static_cast<bool>(delta);
  r.mu_plus.assign(sd.states.size(), std::vector<double>(A.size()));
  r.mu_minus = r.mu_plus;

  double tau_p = 0.0, tau_m = 0.0;
  for (std::size_t i = 0; i < sd.states.size(); ++i) {
    const double x = sd.states[i];
    for (std::size_t k = 0; k < A.size(); ++k) {
      const int a = A.actions[k];
      const double g = inst.weight(x, a), p = inst.propensity(x, a);
      const double sg = inst.outcome_sd(x, a), mu = inst.outcome_mean(x, a);
      const double bump = r.s * g / p * sg * sg;
      r.mu_plus[i][k] = mu + bump;
      r.mu_minus[i][k] = mu - bump;
      const double lw = sd.probs[i] * A.base_weights[k];
      tau_p += lw * g * r.mu_plus[i][k];
      tau_m += lw * g * r.mu_minus[i][k];
      // (X, A) has mass xi(x) pi(x,a) lambda(a)
      const double mass = lw * p;
      r.kl_pair_displayed += mass * 4.0 * r.s * r.s * g * g * sg * sg / (p * p);
      if (sg > 0.0) {
        const double d = r.mu_plus[i][k] - r.mu_minus[i][k];
        r.kl_pair_exact += mass * d * d / (2.0 * sg * sg);
      }
      if (delta && std::fabs(bump) > delta(x, a) * (1.0 + 1e-12)) r.within_neighborhood = false;
    }
  }
  r.gap = tau_p - tau_m;
  r.kl_n_displayed = n * r.kl_pair_displayed;
  r.kl_n_exact = n * r.kl_pair_exact;
  r.tv_bound = std::sqrt(0.5 * r.kl_n_displayed);
  return r;
}

double signed_functional(const ProblemInstance& inst, const StateActionFn& delta,
                         const std::vector<std::vector<int>>& signs) {
  const StateDistribution& sd = finite_states(inst, "signed_functional");
  const ActionSpace& A = inst.actions;
  if (signs.size() != sd.states.size()) throw Error("bad-argument", "one sign row per state");
  double tau = 0.0;
  for (std::size_t i = 0; i < sd.states.size(); ++i) {
    const double x = sd.states[i];
    if (signs[i].size() != A.size()) throw Error("bad-argument", "one sign per action");
    for (std::size_t k = 0; k < A.size(); ++k) {
      const int a = A.actions[k];
      const double mu = inst.outcome_mean(x, a) + signs[i][k] * delta(x, a);
      tau += sd.probs[i] * A.base_weights[k] * inst.weight(x, a) * mu;
    }
  }
  return tau;
}

MixtureReport delta_mixture(const ProblemInstance& inst, const StateActionFn& delta, double s,
                            int reps, std::uint64_t seed) {
  const StateDistribution& sd = finite_states(inst, "delta_mixture");
  if (!delta) throw Error("bad-argument", "delta_mixture needs a delta function");
  if (reps < 2) throw Error("bad-argument", "reps must be >= 2");
  const ActionSpace& A = inst.actions;
  const std::size_t S = sd.states.size(), K = A.size();

  std::vector<double> z, mass;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    const double x = sd.states[i];
    for (std::size_t k = 0; k < K; ++k) {
      const int a = A.actions[k];
      const double d = delta(x, a);
      if (!(d > 0.0)) throw Error("bad-argument", "delta must be > 0 at every state-action pair");
      const double g = inst.weight(x, a), p = inst.propensity(x, a);
      z.push_back(g * d / p);
      mass.push_back(sd.probs[i] * A.base_weights[k] * p);
      norm2 += sd.probs[i] * A.base_weights[k] * g * g * d * d / p;
    }
  }
  if (!(norm2 > 0.0)) throw Error("zero-norm", "||delta||_omega is zero");

  MixtureReport r;
  r.m_ratio = moment_ratio(z, mass);
  r.s_cap = 1.0 / (2.0 * r.m_ratio);
  if (!(s > 0.0) || s > r.s_cap * (1.0 + 1e-12))
    throw Error("bad-argument", "s must lie in (0, 1/(2 M)]");
  r.s = s;
  r.delta_norm = std::sqrt(norm2);
  r.reps = reps;
  r.tau_star = true_functional(inst);

  const double thr = 2.0 * r.m_ratio * r.delta_norm;
  r.rho.assign(S, std::vector<double>(K));
  double drift = 0.0;  // E_xi sum_a lambda g delta rho
  for (std::size_t i = 0; i < S; ++i) {
    const double x = sd.states[i];
    for (std::size_t k = 0; k < K; ++k) {
      const int a = A.actions[k];
      const double g = inst.weight(x, a), p = inst.propensity(x, a), d = delta(x, a);
      double rho;
      if (std::fabs(g) * d / p <= thr) {
        rho = g * d / (r.delta_norm * p);
      } else {
        rho = sgn(g);
        ++r.truncated_atoms;
      }
      r.rho[i][k] = rho;
      drift += sd.probs[i] * A.base_weights[k] * g * d * rho;
      const double c = sd.probs[i] * A.base_weights[k] * g * d;
      r.hoeffding_v += c * c;
    }
  }
  r.gap_exact = 2.0 * s * drift;
  r.gap_displayed = s * r.delta_norm / 2.0;
  const double t = 2.0;
  r.half_width = std::sqrt(t * r.hoeffding_v);
  r.coverage_displayed = 1.0 - 2.0 * std::exp(-2.0 * t);
  r.coverage_hoeffding = 1.0 - 2.0 * std::exp(-t / 2.0);

  std::vector<double> taus[2];
  std::vector<std::vector<int>> signs(S, std::vector<int>(K));
  std::size_t inside = 0;
  for (int side = 0; side < 2; ++side) {
    const double zs = side == 0 ? 1.0 : -1.0;
    const double centre = r.tau_star + zs * s * drift;
    for (int rep = 0; rep < reps; ++rep) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(side)}));
      for (std::size_t i = 0; i < S; ++i)
        for (std::size_t k = 0; k < K; ++k)
          signs[i][k] = rng.coin((1.0 + zs * s * r.rho[i][k]) / 2.0) ? 1 : -1;
      const double tau = signed_functional(inst, delta, signs);
      taus[side].push_back(tau);
      if (std::fabs(tau - centre) <= r.half_width) ++inside;
    }
  }
  auto mean_var = [](const std::vector<double>& v, double& mean, double& var) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    var = ss / static_cast<double>(v.size() - 1);
  };
  double m1, v1, m0, v0;
  mean_var(taus[0], m1, v1);
  mean_var(taus[1], m0, v0);
  r.gap_mc = m1 - m0;
  r.gap_mc_se = std::sqrt((v1 + v0) / reps);
  r.empirical_coverage = static_cast<double>(inside) / (2.0 * reps);
  return r;
}

TruncationCheck check_truncation_lemma(const std::vector<double>& values,
                                       const std::vector<double>& probs) {
  if (values.size() != probs.size() || values.empty())
    throw Error("bad-argument", "values and probs must match and be non-empty");
  TruncationCheck c;
  c.m_ratio = moment_ratio(values, probs);
  for (std::size_t i = 0; i < values.size(); ++i) c.second_moment += probs[i] * values[i] * values[i];
  const double thr = 2.0 * c.m_ratio * std::sqrt(c.second_moment);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (std::fabs(values[i]) <= thr * (1.0 + 1e-12))
      c.truncated_second_moment += probs[i] * values[i] * values[i];
  c.holds = c.truncated_second_moment >= 0.5 * c.second_moment * (1.0 - 1e-12);
  return c;
}

ConditionalTvCheck check_conditional_tv(const FiniteDistribution& mu,
                                        const FiniteDistribution& nu,
                                        const std::vector<bool>& event) {
  if (mu.size() != nu.size() || event.size() != mu.size())
    throw Error("bad-argument", "mu, nu and the event must share atoms");
  double me = 0.0, ne = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (event[i]) {
      me += mu.probs[i];
      ne += nu.probs[i];
    }
  ConditionalTvCheck c;
  c.eps = std::max(0.0, 1.0 - std::min(me, ne));
  if (c.eps > 0.25) throw Error("bad-argument", "event too small: eps exceeds 1/4");
  FiniteDistribution mc, nc;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    mc.probs.push_back(event[i] ? mu.probs[i] / me : 0.0);
    nc.probs.push_back(event[i] ? nu.probs[i] / ne : 0.0);
  }
  c.tv = divergence(DivergenceKind::TV, mu, nu);
  c.tv_conditional = divergence(DivergenceKind::TV, mc, nc);
  c.lower_holds = c.tv - 4.0 * c.eps <= c.tv_conditional + 1e-12;
  c.upper_holds = c.tv_conditional <= c.tv / (1.0 - c.eps) + 2.0 * c.eps + 1e-12;
  return c;
}

nlohmann::json to_json(const TiltedReport& r) {
  return {{"construction", "tilted"},
          {"degenerate", r.degenerate},
          {"s", r.s},
          {"h_norm", r.h_norm},
          {"m_prime", r.m_prime},
          {"tilted_probs", r.tilted.probs},
          {"chi2", r.chi2},
          {"chi2_bound", r.chi2_bound},
          {"chi2_ok", r.chi2_ok},
          {"gap", r.gap},
          {"gap_bound", r.gap_bound},
          {"gap_applicable", r.gap_applicable},
          {"gap_ok", r.gap_ok},
          {"sandwich_ok", r.sandwich_ok},
          {"ratio_ok", r.ratio_ok},
          {"ratio_one_factor_ok", r.ratio_one_factor_ok}};
}

nlohmann::json to_json(const SigmaPairReport& r) {
  return {{"construction", "sigma-pair"},
          {"s", r.s},
          {"sigma_norm", r.sigma_norm},
          {"gap", r.gap},
          {"gap_expected", r.gap_expected},
          {"kl_pair_displayed", r.kl_pair_displayed},
          {"kl_pair_exact", r.kl_pair_exact},
          {"kl_n_displayed", r.kl_n_displayed},
          {"kl_n_exact", r.kl_n_exact},
          {"tv_bound", r.tv_bound},
          {"neighborhood_checked", r.neighborhood_checked},
          {"within_neighborhood", r.within_neighborhood}};
}

nlohmann::json to_json(const MixtureReport& r) {
  return {{"construction", "delta-mixture"},
          {"s", r.s},
          {"s_cap", r.s_cap},
          {"m_ratio", r.m_ratio},
          {"delta_norm", r.delta_norm},
          {"truncated_atoms", r.truncated_atoms},
          {"gap_exact", r.gap_exact},
          {"gap_displayed", r.gap_displayed},
          {"gap_mc", r.gap_mc},
          {"gap_mc_se", r.gap_mc_se},
          {"reps", r.reps},
          {"half_width", r.half_width},
          {"coverage_displayed", r.coverage_displayed},
          {"coverage_hoeffding", r.coverage_hoeffding},
          {"empirical_coverage", r.empirical_coverage}};
}

}  // namespace ope
