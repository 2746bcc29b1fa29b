#include "ope/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ope/error.hpp"
#include "ope/rng.hpp"

namespace ope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

McEstimate mean_and_se(const std::vector<double>& v) {
  McEstimate e;
  e.reps = static_cast<int>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  e.estimate = mean;
  e.se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) /
                                  static_cast<double>(v.size()))
                      : 0.0;
  return e;
}

// Precomputed supremum for one spec.
class Supremum {
 public:
  explicit Supremum(const LocalizedClassSpec& spec) : spec_(spec) {
    spec.validate();
    if (spec.kind == LocalizedClassSpec::Kind::LinearEllipsoid) llt_.compute(spec.sigma);
  }

  double operator()(const Eigen::VectorXd& v) const {
    switch (spec_.kind) {
      case LocalizedClassSpec::Kind::SingletonZero:
        return 0.0;
      case LocalizedClassSpec::Kind::L1Ball:
        return spec_.l1_radius * v.cwiseAbs().maxCoeff();
      case LocalizedClassSpec::Kind::LinearEllipsoid: {
        const double q = v.dot(llt_.solve(v));
        return spec_.radius * std::sqrt(std::max(0.0, q));
      }
    }
    return 0.0;
  }

 private:
  const LocalizedClassSpec& spec_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

void check_mc_args(std::size_t m, int reps) {
  if (m == 0) throw Error("bad-argument", "m must be positive");
  if (reps < 1) throw Error("bad-argument", "reps must be >= 1");
}

// One rep: the score vector (1/m) sum eps_i c_i phi_i with per-row coefficient c.
template <class Coef>
Eigen::VectorXd score(const ProblemInstance& inst, const LocalizedClassSpec& spec,
                      std::size_t m, std::uint64_t seed, Coef coef) {
  const Dataset d = sample_dataset(inst, m, seed);
  Rng signs(seed, 0x5167ULL);
  const std::size_t dim = spec.kind == LocalizedClassSpec::Kind::SingletonZero
                              ? 1
                              : spec.features.dim;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  Eigen::VectorXd phi(static_cast<Eigen::Index>(dim));
  for (const Triple& t : d.triples) {
    const double eps = signs.coin(0.5) ? 1.0 : -1.0;
    if (spec.kind == LocalizedClassSpec::Kind::SingletonZero) continue;
    spec.features.fill(t.x, t.a, phi.data());
    v += (eps * coef(t)) * phi;
  }
  return v / static_cast<double>(m);
}

Eigen::MatrixXd gram(const ProblemInstance& inst, const FeatureMap& fm,
                     const std::function<double(double, int)>& w) {
  const auto d = static_cast<Eigen::Index>(fm.dim);
  Eigen::MatrixXd G(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      const double v = expect_state(inst, [&](double x) {
        Eigen::VectorXd phi(d);
        double s = 0.0;
        for (std::size_t k = 0; k < inst.actions.size(); ++k) {
          const int a = inst.actions.actions[k];
          fm.fill(x, a, phi.data());
          s += inst.actions.base_weights[k] * w(x, a) * phi[i] * phi[j];
        }
        return s;
      });
      G(i, j) = v;
      G(j, i) = v;
    }
  }
  return G;
}

}  // namespace

LocalizedClassSpec LocalizedClassSpec::singleton_zero() { return LocalizedClassSpec{}; }

LocalizedClassSpec LocalizedClassSpec::linear_ellipsoid(FeatureMap fm, Eigen::MatrixXd sigma,
                                                        double r) {
  LocalizedClassSpec s;
  s.kind = Kind::LinearEllipsoid;
  s.features = std::move(fm);
  s.sigma = std::move(sigma);
  s.radius = r;
  s.validate();
  return s;
}

LocalizedClassSpec LocalizedClassSpec::l1_ball(FeatureMap fm, double l1_radius) {
  LocalizedClassSpec s;
  s.kind = Kind::L1Ball;
  s.features = std::move(fm);
  s.l1_radius = l1_radius;
  s.validate();
  return s;
}

LocalizedClassSpec LocalizedClassSpec::with_radius(double r) const {
  LocalizedClassSpec s = *this;
  s.radius = r;
  return s;
}

void LocalizedClassSpec::validate() const {
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw Error("bad-class", "localization radius must be finite and >= 0");
  if (kind == Kind::SingletonZero) return;
  if (features.dim == 0 || !features.fill) throw Error("bad-class", "class needs a feature map");
  if (kind == Kind::L1Ball) {
    if (!(l1_radius >= 0.0)) throw Error("bad-class", "l1 radius must be >= 0");
    return;
  }
  const auto d = static_cast<Eigen::Index>(features.dim);
  if (sigma.rows() != d || sigma.cols() != d)
    throw Error("bad-class", "Sigma must be d x d for the feature map");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
    throw Error("bad-class", "Sigma must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error("bad-class", "Sigma must be positive definite");
}

Eigen::MatrixXd omega_gram(const ProblemInstance& inst, const FeatureMap& fm) {
  return gram(inst, fm, [&](double x, int a) {
    const double g = inst.weight(x, a);
    return g * g / inst.propensity(x, a);
  });
}

Eigen::MatrixXd noise_gram(const ProblemInstance& inst, const FeatureMap& fm) {
  return gram(inst, fm, [&](double x, int a) {
    const double g = inst.weight(x, a), p = inst.propensity(x, a), s = inst.outcome_sd(x, a);
    return g * g * g * g * s * s / (p * p * p);
  });
}

double class_supremum(const LocalizedClassSpec& spec, const Eigen::VectorXd& v) {
  return Supremum(spec)(v);
}

McEstimate rademacher_S_mc(const ProblemInstance& inst, const LocalizedClassSpec& spec,
                           std::size_t m, Multiplier multiplier, int reps,
                           std::uint64_t seed) {
  check_mc_args(m, reps);
  const Supremum sup(spec);
  if (spec.kind == LocalizedClassSpec::Kind::SingletonZero) return McEstimate{0.0, 0.0, reps};
  if (multiplier == Multiplier::Custom && !spec.center)
    throw Error("bad-argument", "custom multiplier needs a center function");
  std::vector<double> sq(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd v = score(
        inst, spec, m, derive_seed(seed, {static_cast<std::uint64_t>(r)}), [&](const Triple& t) {
          const double g = inst.weight(t.x, t.a), p = inst.propensity(t.x, t.a);
          const double mu = inst.outcome_mean(t.x, t.a);
          const double w = multiplier == Multiplier::OutcomeNoise ? t.y - mu
                                                                  : mu - spec.center(t.x, t.a);
          return g * g / (p * p) * w;
        });
    const double s = sup(v);
    sq[static_cast<std::size_t>(r)] = s * s;
  }
  const McEstimate m2 = mean_and_se(sq);
  McEstimate out;
  out.reps = reps;
  out.estimate = std::sqrt(m2.estimate);
  out.se = out.estimate > 0.0 ? m2.se / (2.0 * out.estimate) : 0.0;
  return out;
}

McEstimate rademacher_R_mc(const ProblemInstance& inst, const LocalizedClassSpec& spec,
                           std::size_t m, int reps, std::uint64_t seed) {
  check_mc_args(m, reps);
  const Supremum sup(spec);
  if (spec.kind == LocalizedClassSpec::Kind::SingletonZero) return McEstimate{0.0, 0.0, reps};
  std::vector<double> vals(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd v = score(
        inst, spec, m, derive_seed(seed, {static_cast<std::uint64_t>(r)}),
        [&](const Triple& t) { return inst.weight(t.x, t.a) / inst.propensity(t.x, t.a); });
    vals[static_cast<std::size_t>(r)] = sup(v);
  }
  return mean_and_se(vals);
}

std::vector<ProfilePoint> rademacher_R_profile(const ProblemInstance& inst,
                                               const LocalizedClassSpec& spec, std::size_t m,
                                               const std::vector<double>& radii, int reps,
                                               std::uint64_t seed) {
  std::vector<ProfilePoint> out;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw Error("bad-argument", "profile radii must be > 0");
    const McEstimate e =
        rademacher_R_mc(inst, spec.with_radius(radii[k]), m, reps, derive_seed(seed, {k}));
    out.push_back({radii[k], e.estimate, e.se});
  }
  return out;
}

void write_profile_csv(const std::vector<ProfilePoint>& profile, std::ostream& os) {
  os << "r,estimate,stderr\n";
  char buf[128];
  for (const auto& p : profile) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", p.r, p.estimate, p.se);
    os << buf;
  }
}

bool ratio_non_increasing(const std::vector<ProfilePoint>& profile, double ses) {
  std::vector<ProfilePoint> p = profile;
  std::sort(p.begin(), p.end(), [](const ProfilePoint& a, const ProfilePoint& b) { return a.r < b.r; });
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double a = p[i - 1].estimate / p[i - 1].r, b = p[i].estimate / p[i].r;
    const double se = std::hypot(p[i - 1].se / p[i - 1].r, p[i].se / p[i].r);
    if (b > a + ses * se) return false;
  }
  return true;
}

CriticalRadiusResult critical_radius(const ProblemInstance& inst,
                                     const LocalizedClassSpec& family, std::size_t m,
                                     const CriticalRadiusOptions& opt) {
  family.validate();
  if (m == 0) throw Error("bad-argument", "m must be positive");
  if (!(opt.tolerance > 0.0)) throw Error("bad-argument", "tolerance must be > 0");
  const bool kind_r = opt.kind == RadiusKind::R;
  if (kind_r && !(opt.alpha1 > 0.0 && opt.alpha2 > 0.0))
    throw Error("bad-argument", "kind r needs positive small-ball constants alpha1, alpha2");
  const double level = kind_r ? opt.alpha1 * opt.alpha2 / 32.0 : 0.0;

  CriticalRadiusResult res;
  if (family.kind == LocalizedClassSpec::Kind::SingletonZero) return res;

  if (opt.source == ComplexitySource::ClosedFormLinear) {
    if (family.kind != LocalizedClassSpec::Kind::LinearEllipsoid)
      throw Error("bad-argument", "closed-form-linear needs a linear-ellipsoid class");
    const double md = static_cast<double>(m);
    if (kind_r) {
      // R_m(r) <= r sqrt(d/m)
      res.radius = std::sqrt(static_cast<double>(family.features.dim) / md) <= level ? 0.0 : kInf;
    } else {
      // S_m(s) <= s sqrt(tr(Sigma^-1 Gamma)/m)
      const Eigen::MatrixXd gamma = noise_gram(inst, family.features);
      const double tr = family.sigma.llt().solve(gamma).trace();
      res.radius = std::sqrt(std::max(0.0, tr) / md);
    }
    return res;
  }

  // Monte Carlo profile with common random numbers across radii.
  std::vector<ProfilePoint> seen;
  auto holds = [&](double r) {
    const LocalizedClassSpec at = family.with_radius(r);
    const McEstimate c = kind_r ? rademacher_R_mc(inst, at, m, opt.reps, opt.seed)
                                : rademacher_S_mc(inst, at, m, opt.multiplier, opt.reps, opt.seed);
    ++res.evaluations;
    seen.push_back({r, c.estimate, c.se});
    return kind_r ? c.estimate <= level * r : c.estimate <= r * r;
  };
  auto check_profile = [&] {
    if (!ratio_non_increasing(seen, 3.0))
      throw Error("non-monotone-profile",
                  "Monte Carlo profile of complexity/r increases with r beyond its error; "
                  "rerun with more reps");
  };

  if (holds(opt.tolerance)) {
    check_profile();
    res.radius = 0.0;
    return res;
  }
  double lo = opt.tolerance, hi = std::max(1.0, 2.0 * opt.tolerance);
  while (!holds(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > opt.r_max) {
      check_profile();
      res.radius = kInf;
      return res;
    }
  }
  while (hi - lo > opt.tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (holds(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  check_profile();
  res.radius = hi;
  return res;
}

McEstimate small_ball_estimate(const ProblemInstance& inst, const StateActionFunction& h,
                               double alpha1, int reps, std::uint64_t seed) {
  if (reps < 1) throw Error("bad-argument", "reps must be >= 1");
  if (!(alpha1 >= 0.0)) throw Error("bad-argument", "alpha1 must be >= 0");
  const double norm = weighted_norm(inst, h);
  if (!(norm > 0.0)) throw Error("zero-norm", "small-ball probability needs ||h||_omega > 0");
  const double thr = alpha1 * norm;
  const Dataset d = sample_dataset(inst, static_cast<std::size_t>(reps), seed);
  std::size_t hits = 0;
  for (const Triple& t : d.triples) {
    const double v = std::fabs(inst.weight(t.x, t.a) * h(t.x, t.a) / inst.propensity(t.x, t.a));
    if (v >= thr) ++hits;
  }
  McEstimate e;
  e.reps = reps;
  e.estimate = static_cast<double>(hits) / reps;
  e.se = std::sqrt(e.estimate * (1.0 - e.estimate) / reps);
  return e;
}

CertificateCheck verify_certificate(const ShatteringCertificate& cert, double tol,
                                    std::size_t exhaustive_limit, std::size_t random_patterns,
                                    std::uint64_t seed) {
  const std::size_t D = cert.dimension();
  if (D == 0) throw Error("bad-certificate", "certificate has no points");
  if (cert.thresholds.size() != D) throw Error("bad-certificate", "one threshold per point");
  if (!cert.witness || !cert.evaluate) throw Error("bad-certificate", "missing witness or model");

  CertificateCheck c;
  c.exhaustive = D <= exhaustive_limit;
  const std::size_t total = c.exhaustive ? (std::size_t{1} << D) : random_patterns;
  Rng rng(seed, 0xce47ULL);
  std::vector<int> zeta(D);
  bool sign_ok = true;
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t i = 0; i < D; ++i) {
      const bool up = c.exhaustive ? ((k >> i) & 1U) != 0 : rng.coin(0.5);
      zeta[i] = up ? 1 : -1;
    }
    const Eigen::VectorXd beta = cert.witness(zeta);
    if (cert.in_class && !cert.in_class(beta)) c.witnesses_in_class = false;
    for (std::size_t i = 0; i < D; ++i) {
      const double f = cert.evaluate(beta, cert.points[i]);
      const double target = cert.thresholds[i] + zeta[i] * cert.scale;
      c.max_error = std::max(c.max_error, std::fabs(f - target));
      if (zeta[i] * (f - cert.thresholds[i]) < cert.scale - tol) sign_ok = false;
    }
  }
  c.patterns = total;
  c.passed = c.witnesses_in_class && (cert.equality ? c.max_error <= tol : sign_ok);
  return c;
}

Link make_link(const std::string& id) {
  Link l;
  l.id = id;
  if (id == "identity") {
    l.phi = [](double s) { return s; };
    l.inverse = [](double y) { return y; };
  } else if (id == "tanh") {
    l.phi = [](double s) { return std::tanh(s); };
    l.inverse = [](double y) { return std::atanh(y); };
    l.inverse_bound = 1.0;
  } else if (id == "cubic") {
    l.phi = [](double s) { return s + s * s * s; };
    l.inverse = [](double y) {
      // Cardano for s^3 + s - y = 0, then Newton polish.
      const double q = std::sqrt(y * y / 4.0 + 1.0 / 27.0);
      double s = std::cbrt(y / 2.0 + q) + std::cbrt(y / 2.0 - q);
      for (int it = 0; it < 4; ++it) s -= (s + s * s * s - y) / (1.0 + 3.0 * s * s);
      return s;
    };
  } else {
    throw Error("bad-argument", "unknown link " + id + " (identity, tanh, cubic)");
  }
  return l;
}

Eigen::MatrixXd hadamard_matrix(std::size_t p) {
  if (p == 0 || (p & (p - 1)) != 0) throw Error("bad-argument", "p must be a power of two");
  Eigen::MatrixXd H = Eigen::MatrixXd::Ones(1, 1);
  while (static_cast<std::size_t>(H.rows()) < p) {
    const Eigen::Index k = H.rows();
    Eigen::MatrixXd N(2 * k, 2 * k);
    N << H, H, H, -H;
    H = N;
  }
  return H;
}

ShatteringCertificate hadamard_glm_shatter(std::size_t p, const Link& link, double amplitude,
                                           double radius) {
  const Eigen::MatrixXd H = hadamard_matrix(p);
  if (!(amplitude > 0.0) || !(radius > 0.0))
    throw Error("bad-argument", "amplitude and radius must be > 0");
  const double level = amplitude * radius;
  if (link.inverse_bound > 0.0 && !(level < link.inverse_bound))
    throw Error("out-of-domain", "link inverse undefined at +-a*R");
  const double pre = link.inverse(level);
  if (!std::isfinite(pre)) throw Error("out-of-domain", "link inverse not finite at a*R");
  // ||beta(zeta)||_2 = |phi^{-1}(aR)| for odd links
  if (std::fabs(pre) > radius * (1.0 + 1e-12))
    throw Error("out-of-domain", "witness norm |phi^{-1}(aR)| exceeds the radius R");

  ShatteringCertificate c;
  c.description = "hadamard-glm(p=" + std::to_string(p) + ", link=" + link.id + ")";
  for (Eigen::Index j = 0; j < H.cols(); ++j) c.points.push_back(H.col(j));
  c.thresholds.assign(p, 0.0);
  c.scale = level;
  c.equality = true;
  const double pd = static_cast<double>(p);
  c.witness = [H, link, level, pd](const std::vector<int>& zeta) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(H.rows());
    for (Eigen::Index j = 0; j < H.cols(); ++j)
      beta += link.inverse(zeta[static_cast<std::size_t>(j)] * level) * H.col(j);
    return Eigen::VectorXd(beta / pd);
  };
  c.evaluate = [link](const Eigen::VectorXd& beta, const Eigen::VectorXd& x) {
    return link.phi(beta.dot(x));
  };
  c.in_class = [radius](const Eigen::VectorXd& beta) {
    return beta.norm() <= radius * (1.0 + 1e-12);
  };
  return c;
}

ShatteringCertificate sparse_packing_shatter(std::size_t p, std::size_t s) {
  if (s == 0 || p == 0 || p % s != 0)
    throw Error("bad-argument", "sparse packing needs s >= 1 dividing p");
  const std::size_t blocks = p / s;
  if ((blocks & (blocks - 1)) != 0)
    throw Error("bad-argument", "sparse packing needs p/s to be a power of two");
  std::size_t k = 0;
  while ((std::size_t{1} << k) < blocks) ++k;
  if (k == 0)
    throw Error("degenerate",
                "s = p leaves no binary digits (k = 0), so the packing has no points");

  // coordinate (column c of A, block j) sits at index c*s + j, i.e. a_i (x) e_j.
  auto bit = [k](std::size_t c, std::size_t i) { return (c >> (k - 1 - i)) & 1U; };
  ShatteringCertificate cert;
  cert.description = "sparse-packing(p=" + std::to_string(p) + ", s=" + std::to_string(s) + ")";
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
      for (std::size_t c = 0; c < blocks; ++c)
        if (bit(c, i)) x[static_cast<Eigen::Index>(c * s + j)] = 1.0;
      cert.points.push_back(x);
    }
  }
  cert.thresholds.assign(k * s, 0.5);
  cert.scale = 0.5;
  cert.equality = true;
  cert.witness = [k, s, p](const std::vector<int>& zeta) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < s; ++j) {
      // column whose binary digits are the block's bits zeta_{1j} .. zeta_{kj}
      std::size_t col = 0;
      for (std::size_t i = 0; i < k; ++i) col = (col << 1) | (zeta[i * s + j] > 0 ? 1U : 0U);
      beta[static_cast<Eigen::Index>(col * s + j)] = 1.0;
    }
    return beta;
  };
  cert.evaluate = [](const Eigen::VectorXd& beta, const Eigen::VectorXd& x) {
    return beta.dot(x);
  };
  cert.in_class = [s](const Eigen::VectorXd& beta) {
    std::size_t nnz = 0;
    for (Eigen::Index i = 0; i < beta.size(); ++i)
      if (beta[i] != 0.0) ++nnz;
    return nnz <= s && beta.cwiseAbs().maxCoeff() <= 1.0;
  };
  return cert;
}

}  // namespace ope
