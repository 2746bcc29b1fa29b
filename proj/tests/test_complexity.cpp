#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "ope/complexity.hpp"
#include "ope/error.hpp"
#include "ope/instances.hpp"

using namespace ope;

namespace {

// D1 atoms (x, a) with probability xi(x) pi(x, a), and |g/pi| in units of 1/12.
struct Atom {
  double x;
  int a;
  double prob;
  int units;
};
const Atom kD1[] = {{0.0, 0, 0.4, 15}, {0.0, 1, 0.1, 60}, {1.0, 0, 0.2, 30}, {1.0, 1, 0.3, 20}};

// E| sum_{i<=m} eps_i w_i | in units of 1/12, by dynamic programming over
// the integer-valued partial sums.
double exact_abs_sum(int m) {
  const int max_unit = 60;
  const int off = m * max_unit;
  std::vector<double> cur(2 * off + 1, 0.0), nxt(2 * off + 1);
  cur[off] = 1.0;
  for (int i = 0; i < m; ++i) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int s = 0; s <= 2 * off; ++s) {
      if (cur[s] == 0.0) continue;
      for (const Atom& at : kD1) {
        nxt[s + at.units] += 0.5 * at.prob * cur[s];
        nxt[s - at.units] += 0.5 * at.prob * cur[s];
      }
    }
    std::swap(cur, nxt);
  }
  double e = 0.0;
  for (int s = 0; s <= 2 * off; ++s) e += cur[s] * std::abs(s - off);
  return e;
}

FeatureMap const_map() { return make_feature_map("const"); }

}  // namespace

TEST_CASE("omega Gram matrix on D1") {
  const ProblemInstance d1 = d1_instance(1.0);
  const Eigen::MatrixXd S = omega_gram(d1, const_map());
  CHECK(S(0, 0) == doctest::Approx(125.0 / 24.0).epsilon(1e-14));
  // E sum_a g^4 sigma^2/pi^3 = 0.5 (1/0.8^3 + 1/0.2^3) + 0.5 (1/0.4^3 + 1/0.6^3)
  const Eigen::MatrixXd G = noise_gram(d1, const_map());
  CHECK(G(0, 0) == doctest::Approx(0.5 * (1 / 0.512 + 1 / 0.008) + 0.5 * (1 / 0.064 + 1 / 0.216)));
}

TEST_CASE("singleton and noiseless classes") {
  const ProblemInstance d1 = d1_instance(1.0);
  const auto zero = LocalizedClassSpec::singleton_zero();
  CHECK(rademacher_S_mc(d1, zero, 50, Multiplier::OutcomeNoise, 100, 1).estimate == 0.0);
  CHECK(rademacher_R_mc(d1, zero, 50, 100, 1).estimate == 0.0);
  CriticalRadiusOptions o;
  o.kind = RadiusKind::S;
  CHECK(critical_radius(d1, zero, 50, o).radius == 0.0);
  o.kind = RadiusKind::R;
  o.alpha1 = o.alpha2 = 1.0;
  CHECK(critical_radius(d1, zero, 50, o).radius == 0.0);

  const ProblemInstance quiet = d1_instance(0.0);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(const_map(), omega_gram(quiet, const_map()), 1.0);
  CHECK(rademacher_S_mc(quiet, lin, 50, Multiplier::OutcomeNoise, 200, 2).estimate == 0.0);
}

TEST_CASE("R_m of the one-feature class matches exact enumeration") {
  const ProblemInstance d1 = d1_instance(0.0);
  const double sigma = 125.0 / 24.0;
  const int m = 100;
  const double exact = exact_abs_sum(m) / 12.0 / m / std::sqrt(sigma);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(const_map(), omega_gram(d1, const_map()), 1.0);
  const McEstimate e = rademacher_R_mc(d1, lin, m, 10000, 11);
  CHECK(std::abs(e.estimate - exact) <= 3.0 * e.se);
  CHECK(e.se < 0.02 * exact);

  // same draws through the l1 ball: sup = R1 |v| = sqrt(Sigma) times the ellipsoid sup
  const auto l1 = LocalizedClassSpec::l1_ball(const_map(), 1.0);
  const McEstimate e1 = rademacher_R_mc(d1, l1, m, 10000, 11);
  CHECK(e1.estimate == doctest::Approx(e.estimate * std::sqrt(sigma)).epsilon(1e-12));

  // radius scales the supremum linearly
  const McEstimate e3 = rademacher_R_mc(d1, lin.with_radius(3.0), m, 10000, 11);
  CHECK(e3.estimate == doctest::Approx(3.0 * e.estimate).epsilon(1e-12));
}

TEST_CASE("S_m of the linear class matches r sqrt(tr(Sigma^-1 Gamma)/m)") {
  const ProblemInstance d1 = d1_instance(1.5);
  const FeatureMap fm = make_feature_map("affine");
  const Eigen::MatrixXd S = omega_gram(d1, fm);
  const Eigen::MatrixXd G = noise_gram(d1, fm);
  const double r = 0.7;
  const std::size_t m = 64;
  const double exact = r * std::sqrt(S.llt().solve(G).trace() / m);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(fm, S, r);
  const McEstimate e = rademacher_S_mc(d1, lin, m, Multiplier::OutcomeNoise, 10000, 4);
  CHECK(std::abs(e.estimate - exact) <= 3.0 * e.se);
}

TEST_CASE("S_m with the custom multiplier") {
  const ProblemInstance d1 = d1_instance(0.0);
  const FeatureMap fm = make_feature_map("affine");
  const Eigen::MatrixXd S = omega_gram(d1, fm);
  auto lin = LocalizedClassSpec::linear_ellipsoid(fm, S, 1.0);
  CHECK_THROWS_AS(rademacher_S_mc(d1, lin, 20, Multiplier::Custom, 10, 1), Error);
  lin.center = [](double x, int a) { return 0.5 + x - 0.25 * a; };
  // E[ (g^2/pi^2 (mu* - center))^2 phi^T Sigma^-1 phi ] / m by enumeration
  const Eigen::MatrixXd Si = S.inverse();
  double acc = 0.0;
  for (const Atom& at : kD1) {
    const double g = at.a == 1 ? 1.0 : -1.0;
    const double p = d1.propensity(at.x, at.a);
    const double w = g * g / (p * p) * (d1.outcome_mean(at.x, at.a) - lin.center(at.x, at.a));
    Eigen::Vector2d phi(1.0, at.x);
    acc += at.prob * w * w * phi.dot(Si * phi);
  }
  const std::size_t m = 40;
  const double exact = std::sqrt(acc / m);
  const McEstimate e = rademacher_S_mc(d1, lin, m, Multiplier::Custom, 10000, 8);
  CHECK(std::abs(e.estimate - exact) <= 3.0 * e.se);
}

TEST_CASE("closed-form linear critical radii") {
  const ProblemInstance d1 = d1_instance(1.0);
  const FeatureMap fm = make_feature_map("onehot-sa", {0, 1}, {0.0, 1.0});
  REQUIRE(fm.dim == 4);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(fm, omega_gram(d1, fm), 1.0);
  CriticalRadiusOptions o;
  o.kind = RadiusKind::R;
  o.source = ComplexitySource::ClosedFormLinear;
  o.alpha1 = o.alpha2 = 1.0;
  CHECK(critical_radius(d1, lin, 4097, o).radius == 0.0);
  CHECK(critical_radius(d1, lin, 100000, o).radius == 0.0);
  CHECK(std::isinf(critical_radius(d1, lin, 4095, o).radius));
  CHECK(std::isinf(critical_radius(d1, lin, 10, o).radius));

  o.kind = RadiusKind::S;
  const Eigen::MatrixXd S = omega_gram(d1, fm), G = noise_gram(d1, fm);
  const double expect = std::sqrt(S.llt().solve(G).trace() / 200.0);
  const double s = critical_radius(d1, lin, 200, o).radius;
  CHECK(s == doctest::Approx(expect).epsilon(1e-13));

  o.alpha1 = 0.0;
  o.kind = RadiusKind::R;
  CHECK_THROWS_AS(critical_radius(d1, lin, 100, o), Error);
}

TEST_CASE("Monte Carlo critical radii against the closed form") {
  const ProblemInstance d1 = d1_instance(1.0);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(const_map(), omega_gram(d1, const_map()), 1.0);
  CriticalRadiusOptions o;
  o.kind = RadiusKind::S;
  o.reps = 2000;
  o.seed = 21;
  const std::size_t m = 50;
  const double mc = critical_radius(d1, lin, m, o).radius;
  o.source = ComplexitySource::ClosedFormLinear;
  const double cf = critical_radius(d1, lin, m, o).radius;
  CHECK(mc > 0.5 * cf);
  CHECK(mc < 2.0 * cf);
  CHECK(std::abs(mc - cf) < 0.05 * cf);

  // kind r: R_m(r)/r is a constant near sqrt(d/m)
  o.source = ComplexitySource::MonteCarlo;
  o.kind = RadiusKind::R;
  o.alpha1 = o.alpha2 = 1.0;
  o.reps = 300;
  CHECK(critical_radius(d1, lin, 5000, o).radius == 0.0);
  CHECK(std::isinf(critical_radius(d1, lin, 100, o).radius));
}

TEST_CASE("profile monotonicity") {
  const ProblemInstance d1 = d1_instance(0.0);
  const auto lin = LocalizedClassSpec::linear_ellipsoid(const_map(), omega_gram(d1, const_map()), 1.0);
  const auto prof = rademacher_R_profile(d1, lin, 60, {0.25, 0.5, 1.0, 2.0, 4.0}, 2000, 3);
  REQUIRE(prof.size() == 5);
  CHECK(ratio_non_increasing(prof));
  std::ostringstream os;
  write_profile_csv(prof, os);
  CHECK(os.str().rfind("r,estimate,stderr\n", 0) == 0);

  std::vector<ProfilePoint> up = {{1.0, 1.0, 0.01}, {2.0, 3.0, 0.01}};
  CHECK_FALSE(ratio_non_increasing(up));
  std::vector<ProfilePoint> noisy = {{1.0, 1.0, 0.1}, {2.0, 2.2, 0.1}};
  CHECK(ratio_non_increasing(noisy));
}

TEST_CASE("small ball probability") {
  const ProblemInstance d1 = d1_instance(0.0);
  const StateActionFunction one([](double, int) { return 1.0; });
  CHECK(small_ball_estimate(d1, one, 0.0, 1000, 1).estimate == 1.0);
  CHECK(small_ball_estimate(d1, one, 1e300, 1000, 1).estimate == 0.0);
  // threshold 2.0 lies between |g/pi| = 5/3 and 5/2: atoms (0,1) and (1,0) qualify
  const double alpha1 = 2.0 / std::sqrt(125.0 / 24.0);
  const McEstimate e = small_ball_estimate(d1, one, alpha1, 20000, 5);
  CHECK(std::abs(e.estimate - 0.3) <= 3.0 * e.se);
  const StateActionFunction zero([](double, int) { return 0.0; });
  CHECK_THROWS_AS(small_ball_estimate(d1, zero, 0.5, 100, 1), Error);
}

TEST_CASE("Hadamard GLM certificates") {
  for (std::size_t p : {1u, 2u, 4u, 8u, 16u}) {
    const Eigen::MatrixXd H = hadamard_matrix(p);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        CHECK(H(i, j) == ((std::popcount(i & j) % 2) ? -1.0 : 1.0));
  }
  CHECK_THROWS_AS(hadamard_matrix(6), Error);

  const Link id = make_link("identity");
  for (std::size_t p : {2u, 4u, 8u}) {
    const double a = 1.0 / std::sqrt(static_cast<double>(p)), R = 2.0;
    const ShatteringCertificate c = hadamard_glm_shatter(p, id, a, R);
    const CertificateCheck chk = verify_certificate(c);
    CHECK(chk.exhaustive);
    CHECK(chk.patterns == (std::size_t{1} << p));
    CHECK(chk.max_error <= 1e-10);
    CHECK(chk.passed);
    // independent evaluation with plain dot products
    std::vector<int> zeta(p);
    for (std::size_t k = 0; k < (std::size_t{1} << p); ++k) {
      for (std::size_t i = 0; i < p; ++i) zeta[i] = ((k >> i) & 1U) ? 1 : -1;
      const Eigen::VectorXd beta = c.witness(zeta);
      CHECK(beta.norm() == doctest::Approx(a * R).epsilon(1e-12));
      CHECK(beta.norm() <= R);
      for (std::size_t l = 0; l < p; ++l) {
        double dot = 0.0;
        for (std::size_t q = 0; q < p; ++q) dot += beta[q] * (std::popcount(q & l) % 2 ? -1.0 : 1.0);
        CHECK(std::abs(dot - zeta[l] * a * R) <= 1e-12);
      }
    }
    std::vector<int> plus(p, 1);
    const Eigen::VectorXd b = c.witness(plus);
    for (const auto& x : c.points) CHECK(b.dot(x) == doctest::Approx(a * R));
  }

  for (const char* link : {"tanh", "cubic"}) {
    const ShatteringCertificate c = hadamard_glm_shatter(8, make_link(link), 0.3, 1.0);
    CHECK(verify_certificate(c).passed);
  }
  CHECK_THROWS_AS(hadamard_glm_shatter(4, make_link("tanh"), 1.0, 1.5), Error);
  CHECK_THROWS_AS(make_link("relu"), Error);

  const CertificateCheck big = verify_certificate(hadamard_glm_shatter(32, id, 0.1, 1.0));
  CHECK_FALSE(big.exhaustive);
  CHECK(big.patterns == 10000);
  CHECK(big.passed);
}

TEST_CASE("cubic link inverse") {
  const Link l = make_link("cubic");
  for (double y : {-50.0, -1.0, -1e-9, 0.0, 1e-6, 0.3, 2.0, 1e3}) CHECK(l.phi(l.inverse(y)) == doctest::Approx(y).epsilon(1e-13));
}

TEST_CASE("sparse packing certificates") {
  for (auto [p, s] : {std::pair<std::size_t, std::size_t>{4, 2}, {8, 2}, {8, 1}, {16, 4}}) {
    const ShatteringCertificate c = sparse_packing_shatter(p, s);
    std::size_t k = 0;
    while ((s << k) < p) ++k;
    CHECK(c.dimension() == k * s);
    const CertificateCheck chk = verify_certificate(c);
    CHECK(chk.passed);
    CHECK(chk.exhaustive == (k * s <= 16));
    const std::size_t D = c.dimension();
    std::vector<int> zeta(D);
    for (std::size_t m = 0; m < std::min<std::size_t>(std::size_t{1} << D, 4096); ++m) {
      for (std::size_t i = 0; i < D; ++i) zeta[i] = ((m >> i) & 1U) ? 1 : -1;
      const Eigen::VectorXd beta = c.witness(zeta);
      std::size_t support = 0;
      for (Eigen::Index q = 0; q < beta.size(); ++q) {
        if (beta[q] != 0.0) ++support;
        CHECK(std::abs(beta[q]) <= 1.0);
      }
      CHECK(support <= s);
      for (std::size_t i = 0; i < D; ++i) {
        double dot = 0.0;
        for (Eigen::Index q = 0; q < beta.size(); ++q) dot += beta[q] * c.points[i][q];
        CHECK(dot == (zeta[i] > 0 ? 1.0 : 0.0));
      }
    }
  }
  CHECK(sparse_packing_shatter(4, 2).dimension() == 2);
  CHECK(sparse_packing_shatter(8, 2).dimension() == 4);
  CHECK_THROWS_AS(sparse_packing_shatter(4, 4), Error);
  CHECK_THROWS_AS(sparse_packing_shatter(6, 2), Error);
  CHECK_THROWS_AS(sparse_packing_shatter(5, 2), Error);
}

TEST_CASE("verification catches a broken witness") {
  ShatteringCertificate c = sparse_packing_shatter(8, 2);
  const auto good = c.witness;
  c.witness = [good](const std::vector<int>& z) {
    Eigen::VectorXd b = good(z);
    if (z[0] > 0 && z[3] < 0) b *= 0.999;
    return b;
  };
  CHECK_FALSE(verify_certificate(c).passed);

  ShatteringCertificate d = sparse_packing_shatter(8, 2);
  d.in_class = [](const Eigen::VectorXd&) { return false; };
  const CertificateCheck chk = verify_certificate(d);
  CHECK_FALSE(chk.witnesses_in_class);
  CHECK_FALSE(chk.passed);
}
