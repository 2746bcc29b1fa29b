#include "ope/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ope/error.hpp"

namespace ope {

namespace {

constexpr std::size_t kDenseLimit = 300;

struct Pooled {
  std::vector<double> t, wsum, ybar;
};

// Sorts by x and merges ties into (total weight, weighted mean).
Pooled pool_sorted(std::vector<WeightedPoint> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const WeightedPoint& a, const WeightedPoint& b) { return a.x < b.x; });
  Pooled p;
  for (const WeightedPoint& q : pts) {
    if (!p.t.empty() && p.t.back() == q.x) {
      const double w = p.wsum.back() + q.w;
      p.ybar.back() += (q.y - p.ybar.back()) * (q.w / w);
      p.wsum.back() = w;
    } else {
      p.t.push_back(q.x);
      p.wsum.push_back(q.w);
      p.ybar.push_back(q.y);
    }
  }
  return p;
}

void check_krr_input(const std::vector<WeightedPoint>& points, double lambda,
                     const std::string& kernel_id) {
  if (kernel_id != "sobolev1")
    throw Error("unsupported-kernel", "kernel " + kernel_id + " is not supported");
  if (!(lambda > 0.0))
    throw Error("invalid-argument", "KRR regularization must be positive");
  bool any = false;
  for (const WeightedPoint& p : points) {
    if (p.w < 0.0 || !std::isfinite(p.w))
      throw Error("invalid-weight", "KRR weights must be finite and >= 0");
    if (p.x < 0.0)
      throw Error("invalid-argument", "sobolev1 kernel needs x >= 0");
    any = any || p.w > 0.0;
  }
  if (!any) throw Error("invalid-weight", "KRR needs at least one positive weight");
}

}  // namespace

KrrModel KrrModel::from_alpha(std::vector<double> anchors,
                              std::vector<double> alpha, double lambda) {
  KrrModel m;
  m.anchors_ = std::move(anchors);
  m.alpha_ = std::move(alpha);
  m.lambda_ = lambda;
  m.finalize();
  return m;
}

void KrrModel::finalize() {
  std::vector<std::size_t> order(anchors_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return anchors_[i] < anchors_[j]; });
  std::vector<double> t, a;
  for (std::size_t i : order) {
    if (anchors_[i] < 0.0) throw Error("invalid-argument", "negative anchor");
    if (!t.empty() && t.back() == anchors_[i]) {
      a.back() += alpha_[i];
    } else {
      t.push_back(anchors_[i]);
      a.push_back(alpha_[i]);
    }
  }
  anchors_ = std::move(t);
  alpha_ = std::move(a);
  const std::size_t k = anchors_.size();
  prefix_ax_.assign(k, 0.0);
  suffix_a_.assign(k + 1, 0.0);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    acc += alpha_[j] * anchors_[j];
    prefix_ax_[j] = acc;
  }
  for (std::size_t j = k; j-- > 0;) suffix_a_[j] = suffix_a_[j + 1] + alpha_[j];
}

double KrrModel::operator()(double x) const {
  const std::size_t j = static_cast<std::size_t>(
      std::upper_bound(anchors_.begin(), anchors_.end(), x) - anchors_.begin());
  double f = x * suffix_a_[j];
  if (j > 0) f += prefix_ax_[j - 1];
  return f;
}

double KrrModel::rkhs_norm_sq() const {
  double s = 0.0;
  for (std::size_t j = 0; j < anchors_.size(); ++j)
    s += alpha_[j] * (*this)(anchors_[j]);
  return s;
}

KrrModel fit_weighted_krr(const std::vector<WeightedPoint>& points,
                          double lambda_reg, const std::string& kernel_id,
                          KrrSolver solver) {
  check_krr_input(points, lambda_reg, kernel_id);
  std::vector<WeightedPoint> pos;
  for (const WeightedPoint& p : points)
    if (p.w > 0.0) pos.push_back(p);

  if (solver == KrrSolver::Automatic)
    solver = pos.size() <= kDenseLimit ? KrrSolver::Dense : KrrSolver::Banded;

  KrrModel model;
  model.lambda_ = lambda_reg;

  if (solver == KrrSolver::Dense) {
    const Eigen::Index m = static_cast<Eigen::Index>(pos.size());
    Eigen::MatrixXd K(m, m);
    Eigen::VectorXd y(m), w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      y(i) = pos[i].y;
      w(i) = pos[i].w;
      for (Eigen::Index j = 0; j < m; ++j) K(i, j) = std::min(pos[i].x, pos[j].x);
    }
    // With every w > 0, (WK + lambda I) a = W y is (K + lambda W^-1) a = y.
    Eigen::MatrixXd M = K;
    for (Eigen::Index i = 0; i < m; ++i) M(i, i) += lambda_reg / w(i);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    double cond = std::numeric_limits<double>::infinity();
    if (llt.info() == Eigen::Success) {
      const double rc = llt.rcond();
      if (rc > 0.0) cond = 1.0 / rc;
    }
    Eigen::VectorXd alpha;
    if (cond <= 1e12) {
      alpha = llt.solve(y);
    } else {
      Eigen::MatrixXd A = w.asDiagonal() * K;
      A.diagonal().array() += lambda_reg;
      const Eigen::VectorXd rhs = w.cwiseProduct(y);
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
      alpha = cod.solve(rhs);
      const double resid = (A * alpha - rhs).norm();
      if (!std::isfinite(resid) || resid > 1e-6 * (1.0 + rhs.norm()))
        throw Error("singular-system",
                    "KRR system singular; condition estimate " + std::to_string(cond));
      model.fallback_ = true;
    }
    model.condition_ = cond;
    model.anchors_.resize(m);
    model.alpha_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      model.anchors_[i] = pos[i].x;
      model.alpha_[i] = alpha(i);
    }
    model.finalize();
    return model;
  }

  // Banded path on pooled knots; a knot at x = 0 is pinned to f(0) = 0.
  Pooled p = pool_sorted(std::move(pos));
  if (!p.t.empty() && p.t.front() == 0.0) {
    p.t.erase(p.t.begin());
    p.wsum.erase(p.wsum.begin());
    p.ybar.erase(p.ybar.begin());
  }
  const std::size_t k = p.t.size();
  if (k == 0) {
    model.finalize();
    return model;
  }
  std::vector<double> h(k), diag(k), off(k, 0.0), rhs(k);
  for (std::size_t j = 0; j < k; ++j) h[j] = p.t[j] - (j == 0 ? 0.0 : p.t[j - 1]);
  for (std::size_t j = 0; j < k; ++j) {
    diag[j] = p.wsum[j] + lambda_reg / h[j];
    if (j + 1 < k) {
      diag[j] += lambda_reg / h[j + 1];
      off[j] = -lambda_reg / h[j + 1];
    }
    rhs[j] = p.wsum[j] * p.ybar[j];
  }
  // Thomas elimination; the matrix is symmetric positive definite.
  std::vector<double> c(k), d(k);
  double min_pivot = std::numeric_limits<double>::infinity(), max_diag = 0.0;
  double piv = diag[0];
  c[0] = off[0] / piv;
  d[0] = rhs[0] / piv;
  min_pivot = std::min(min_pivot, piv);
  max_diag = std::max(max_diag, diag[0]);
  for (std::size_t j = 1; j < k; ++j) {
    piv = diag[j] - off[j - 1] * c[j - 1];
    if (!(piv > 0.0))
      throw Error("singular-system", "banded KRR pivot lost positivity");
    min_pivot = std::min(min_pivot, piv);
    max_diag = std::max(max_diag, diag[j]);
    c[j] = off[j] / piv;
    d[j] = (rhs[j] - off[j - 1] * d[j - 1]) / piv;
  }
  std::vector<double> v(k);
  v[k - 1] = d[k - 1];
  for (std::size_t j = k - 1; j-- > 0;) v[j] = d[j] - c[j] * v[j + 1];

  model.anchors_ = p.t;
  model.alpha_.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double left = (v[j] - (j == 0 ? 0.0 : v[j - 1])) / h[j];
    const double right = j + 1 < k ? (v[j + 1] - v[j]) / h[j + 1] : 0.0;
    model.alpha_[j] = left - right;
  }
  model.condition_ = max_diag / min_pivot;
  model.finalize();
  return model;
}

KrrModel fit_unweighted_krr(const std::vector<XYPoint>& points,
                            double lambda_reg, const std::string& kernel_id,
                            KrrSolver solver) {
  std::vector<WeightedPoint> w;
  w.reserve(points.size());
  for (const XYPoint& p : points) w.push_back({p.x, p.y, 1.0});
  return fit_weighted_krr(w, lambda_reg, kernel_id, solver);
}

double krr_objective(const KrrModel& model,
                     const std::vector<WeightedPoint>& points) {
  double s = 0.0;
  for (const WeightedPoint& p : points) {
    const double r = p.y - model(p.x);
    s += p.w * r * r;
  }
  return s + model.lambda() * model.rkhs_norm_sq();
}

Eigen::VectorXd FeatureMap::operator()(double x, int a) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  fill(x, a, v.data());
  return v;
}

FeatureMap make_feature_map(const std::string& id,
                            const std::vector<int>& actions,
                            const std::vector<double>& states) {
  FeatureMap fm;
  fm.id = id;
  if (id == "const") {
    fm.dim = 1;
    fm.fill = [](double, int, double* o) { o[0] = 1.0; };
  } else if (id == "x") {
    fm.dim = 1;
    fm.fill = [](double x, int, double* o) { o[0] = x; };
  } else if (id == "affine") {
    fm.dim = 2;
    fm.fill = [](double x, int, double* o) {
      o[0] = 1.0;
      o[1] = x;
    };
  } else if (id == "affine-by-action") {
    if (actions.empty())
      throw Error("invalid-argument", "affine-by-action needs the action list");
    fm.dim = 2 * actions.size();
    fm.fill = [actions](double x, int a, double* o) {
      for (std::size_t k = 0; k < actions.size(); ++k) {
        const double on = actions[k] == a ? 1.0 : 0.0;
        o[2 * k] = on;
        o[2 * k + 1] = on * x;
      }
    };
  } else if (id == "onehot-sa") {
    if (actions.empty() || states.empty())
      throw Error("invalid-argument", "onehot-sa needs actions and states");
    fm.dim = actions.size() * states.size();
    fm.fill = [actions, states](double x, int a, double* o) {
      const std::size_t K = actions.size();
      std::fill(o, o + K * states.size(), 0.0);
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i] != x) continue;
        for (std::size_t k = 0; k < K; ++k)
          if (actions[k] == a) o[i * K + k] = 1.0;
      }
    };
  } else {
    throw Error("unknown-feature-map", "unknown feature map " + id);
  }
  return fm;
}

double LinearModel::operator()(double x, int a) const {
  return features(x, a).dot(theta);
}

double linear_objective(const LinearModel& model,
                        const std::vector<SAPoint>& points) {
  double s = 0.0;
  for (const SAPoint& p : points) {
    const double r = p.y - model(p.x, p.a);
    s += p.w * r * r;
  }
  return s;
}

namespace {

struct Normal {
  Eigen::MatrixXd G;  // Phi' W Phi
  Eigen::VectorXd b;  // Phi' W y
  double c = 0.0;     // y' W y
  Eigen::MatrixXd Phi_sqrtw;
};

Normal normal_equations(const std::vector<SAPoint>& points,
                        const FeatureMap& fm) {
  const Eigen::Index d = static_cast<Eigen::Index>(fm.dim);
  Normal ne;
  ne.G = Eigen::MatrixXd::Zero(d, d);
  ne.b = Eigen::VectorXd::Zero(d);
  ne.Phi_sqrtw.resize(static_cast<Eigen::Index>(points.size()), d);
  Eigen::VectorXd phi(d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SAPoint& p = points[i];
    if (p.w < 0.0 || !std::isfinite(p.w))
      throw Error("invalid-weight", "weights must be finite and >= 0");
    fm.fill(p.x, p.a, phi.data());
    ne.G.noalias() += p.w * phi * phi.transpose();
    ne.b += p.w * p.y * phi;
    ne.c += p.w * p.y * p.y;
    ne.Phi_sqrtw.row(static_cast<Eigen::Index>(i)) = std::sqrt(p.w) * phi.transpose();
  }
  return ne;
}

}  // namespace

LinearModel fit_weighted_linear(const std::vector<SAPoint>& points,
                                const FeatureMap& features, double ridge,
                                double l2_radius) {
  if (ridge < 0.0) throw Error("invalid-argument", "ridge must be >= 0");
  const Normal ne = normal_equations(points, features);
  const Eigen::Index d = static_cast<Eigen::Index>(features.dim);
  LinearModel m;
  m.features = features;
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ne.Phi_sqrtw);
    qr.setThreshold(1e-12);
    if (qr.rank() < d)
      throw Error("rank-deficient", "weighted design has rank " +
                                        std::to_string(qr.rank()) + " < " +
                                        std::to_string(d));
  }
  Eigen::MatrixXd A = ne.G;
  A.diagonal().array() += ridge;
  m.theta = A.ldlt().solve(ne.b);
  const double nrm = m.theta.norm();
  if (nrm > l2_radius) m.theta *= l2_radius / nrm;
  return m;
}

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
  if (radius <= 0.0) return Eigen::VectorXd::Zero(v.size());
  if (v.lpNorm<1>() <= radius) return v;
  std::vector<double> u(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) u[i] = std::fabs(v(i));
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - radius) / static_cast<double>(j + 1);
    if (u[j] > t) theta = t;
  }
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::max(std::fabs(v(i)) - theta, 0.0);
    out(i) = v(i) < 0 ? -a : a;
  }
  return out;
}

LinearModel fit_l1_constrained(const std::vector<SAPoint>& points,
                               const FeatureMap& features, double radius,
                               const L1Options& opt) {
  if (radius < 0.0) throw Error("invalid-argument", "l1 radius must be >= 0");
  const Normal ne = normal_equations(points, features);
  const Eigen::Index d = static_cast<Eigen::Index>(features.dim);
  LinearModel m;
  m.features = features;
  m.theta = Eigen::VectorXd::Zero(d);
  if (radius == 0.0 || d == 0) return m;

  // Largest eigenvalue of G by power iteration; L = 2 lambda_max.
  Eigen::VectorXd q = Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
  double lam = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd z = ne.G * q;
    const double nz = z.norm();
    if (nz == 0.0) break;
    const double next = q.dot(z);
    q = z / nz;
    if (std::fabs(next - lam) <= 1e-14 * std::fabs(next)) {
      lam = next;
      break;
    }
    lam = next;
  }
  const double L = 2.0 * std::max(lam, ne.G.diagonal().maxCoeff()) * (1.0 + 1e-9);
  if (!(L > 0.0)) return m;

  auto objective = [&](const Eigen::VectorXd& th) {
    return th.dot(ne.G * th) - 2.0 * ne.b.dot(th) + ne.c;
  };
  auto grad = [&](const Eigen::VectorXd& th) {
    return Eigen::VectorXd(2.0 * (ne.G * th - ne.b));
  };
  auto kkt = [&](const Eigen::VectorXd& th) {
    return (th - project_l1_ball(th - grad(th) / L, radius)).lpNorm<Eigen::Infinity>();
  };

  double f = objective(m.theta);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    Eigen::VectorXd next = project_l1_ball(m.theta - grad(m.theta) / L, radius);
    const double fn = objective(next);
    const double dec = (f - fn) / std::max(std::fabs(f), 1e-300);
    m.theta = next;
    f = fn;
    // The objective criterion alone stops early on flat valleys, so it only
    // ends the loop once the projected-gradient step is also negligible.
    if (dec < opt.rel_tol && kkt(m.theta) < 1e-3 * opt.kkt_target) {
      ++it;
      break;
    }
  }
  m.iterations = it;
  m.kkt_residual = kkt(m.theta);
  m.warning = it >= opt.max_iter || m.kkt_residual >= opt.kkt_target;
  return m;
}

double IsotonicModel::operator()(double t) const {
  if (knots_.empty()) return 0.0;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t j = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  double v = levels_[j];
  if (clamp_) v = std::clamp(v, 0.0, 1.0);
  return v;
}

IsotonicModel fit_weighted_isotonic(const std::vector<WeightedPoint>& points,
                                    bool clamp) {
  if (points.empty()) throw Error("invalid-argument", "isotonic fit needs points");
  for (const WeightedPoint& p : points)
    if (!(p.w > 0.0) || !std::isfinite(p.w))
      throw Error("invalid-weight", "isotonic weights must be positive");
  const Pooled p = pool_sorted(points);
  struct Block {
    double value, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t j = 0; j < p.t.size(); ++j) {
    blocks.push_back({p.ybar[j], p.wsum[j], 1});
    while (blocks.size() > 1 &&
           blocks[blocks.size() - 2].value >= blocks.back().value) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w = prev.weight + top.weight;
      prev.value = (prev.value * prev.weight + top.value * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> levels;
  levels.reserve(p.t.size());
  for (const Block& b : blocks) levels.insert(levels.end(), b.count, b.value);
  return IsotonicModel(p.t, std::move(levels), clamp);
}

void FirstStageSpec::validate() const {
  static const char* ids[] = {"weighted-krr", "unweighted-krr", "weighted-linear",
                              "l1-constrained", "weighted-isotonic"};
  if (std::find(std::begin(ids), std::end(ids), regressor_id) == std::end(ids))
    throw Error("unknown-regressor", "unknown regressor " + regressor_id);
  if (folds < 2) throw Error("invalid-config", "folds must be >= 2");
  if (grid.empty()) throw Error("invalid-config", "lambda grid is empty");
  for (double g : grid)
    if (regressor_id.ends_with("krr") ? !(g > 0.0) : g < 0.0)
      throw Error("invalid-config", "lambda grid values out of range");
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 12; ++k) g.push_back(std::pow(10.0, -1.0 + 0.25 * k));
  return g;
}

double first_stage_weight(const std::string& regressor_id,
                          const KnownDesign& design, double x, int a) {
  const double g = design.weight(x, a);
  if (regressor_id == "unweighted-krr") return g != 0.0 ? 1.0 : 0.0;
  const double p = design.propensity(x, a);
  if (!(p > 0.0))
    throw Error("overlap", "zero propensity at an observed pair");
  return g * g / (p * p);
}

std::vector<SAPoint> weighted_rows(const std::vector<Triple>& rows,
                                   const KnownDesign& design,
                                   const std::string& regressor_id) {
  std::vector<SAPoint> out;
  out.reserve(rows.size());
  for (const Triple& t : rows)
    out.push_back({t.x, t.a, t.y, first_stage_weight(regressor_id, design, t.x, t.a)});
  return out;
}

double FirstStageModel::operator()(double x, int a) const {
  if (linear) return (*linear)(x, a);
  for (std::size_t k = 0; k < actions.size(); ++k) {
    if (actions[k] != a) continue;
    if (k < krr.size() && krr[k]) return (*krr[k])(x);
    if (k < isotonic.size() && isotonic[k]) return (*isotonic[k])(x);
    return 0.0;
  }
  return 0.0;
}

StateActionFn FirstStageModel::as_function() const {
  auto self = std::make_shared<const FirstStageModel>(*this);
  return [self](double x, int a) { return (*self)(x, a); };
}

bool FirstStageModel::warning() const { return linear && linear->warning; }

std::string FirstStageModel::serialize() const {
  nlohmann::json j;
  j["regressor_id"] = regressor_id;
  j["lambda_m"] = lambda_m;
  j["n_train"] = train_weights.size();
  if (linear) {
    j["feature_map"] = linear->features.id;
    j["theta"] = std::vector<double>(linear->theta.data(),
                                     linear->theta.data() + linear->theta.size());
    j["warning"] = linear->warning;
  }
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < actions.size(); ++k) {
    nlohmann::json e;
    e["action"] = actions[k];
    if (k < krr.size() && krr[k]) {
      e["anchors"] = krr[k]->anchors();
      e["alpha"] = krr[k]->alpha();
    } else if (k < isotonic.size() && isotonic[k]) {
      e["knots"] = isotonic[k]->knots();
      e["levels"] = isotonic[k]->levels();
    } else if (!linear) {
      e["zero"] = true;
    }
    per.push_back(e);
  }
  j["per_action"] = per;
  return j.dump();
}

FirstStageModel fit_first_stage_at(const std::vector<SAPoint>& points,
                                   const KnownDesign& design,
                                   const FirstStageSpec& spec, double lambda) {
  FirstStageModel model;
  model.regressor_id = spec.regressor_id;
  model.lambda_m = lambda;
  model.actions = design.actions.actions;
  model.train_weights.reserve(points.size());
  for (const SAPoint& p : points) model.train_weights.push_back(p.w);

  const std::string& id = spec.regressor_id;
  if (id == "weighted-krr" || id == "unweighted-krr" || id == "weighted-isotonic") {
    const std::size_t K = model.actions.size();
    std::vector<std::vector<WeightedPoint>> by(K);
    for (const SAPoint& p : points) {
      if (p.w <= 0.0) continue;
      by[design.actions.index_of(p.a)].push_back({p.x, p.y, p.w});
    }
    if (id == "weighted-isotonic") {
      model.isotonic.resize(K);
      for (std::size_t k = 0; k < K; ++k)
        if (!by[k].empty()) model.isotonic[k] = fit_weighted_isotonic(by[k], spec.clamp);
    } else {
      model.krr.resize(K);
      for (std::size_t k = 0; k < K; ++k)
        if (!by[k].empty()) model.krr[k] = fit_weighted_krr(by[k], lambda);
    }
    return model;
  }
  const FeatureMap fm =
      make_feature_map(spec.feature_map, design.actions.actions, spec.feature_states);
  if (id == "weighted-linear") {
    model.linear = fit_weighted_linear(points, fm, lambda, spec.l2_radius);
  } else {
    model.linear = fit_l1_constrained(points, fm, spec.radius);
    model.lambda_m = spec.radius;
  }
  return model;
}

double cross_validate_lambda(const std::vector<SAPoint>& points,
                             const KnownDesign& design,
                             const FirstStageSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t m = points.size();
  const std::size_t folds = static_cast<std::size_t>(spec.folds);
  if (m < folds)
    throw Error("too-few-points", "cross-validation needs at least " +
                                      std::to_string(folds) + " points, got " +
                                      std::to_string(m));
  if (spec.grid.size() == 1) return spec.grid.front();
  const std::string& id = spec.regressor_id;
  if (id != "weighted-krr" && id != "unweighted-krr" && id != "weighted-linear")
    throw Error("unsupported", "no regularization path for " + id);

  std::vector<double> grid = spec.grid;
  std::sort(grid.begin(), grid.end());
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);

  std::vector<double> loss(grid.size(), 0.0);
  std::vector<SAPoint> train, valid;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * m / folds, hi = (f + 1) * m / folds;
    train.clear();
    valid.clear();
    for (std::size_t r = 0; r < m; ++r)
      (r >= lo && r < hi ? valid : train).push_back(points[idx[r]]);
    bool any_train = false;
    for (const SAPoint& p : train) any_train = any_train || p.w > 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (!any_train) {
        for (const SAPoint& p : valid) loss[g] += p.w * p.y * p.y;
        continue;
      }
      const FirstStageModel fit = fit_first_stage_at(train, design, spec, grid[g]);
      for (const SAPoint& p : valid) {
        const double r = p.y - fit(p.x, p.a);
        loss[g] += p.w * r * r;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (loss[g] <= loss[best] * (1.0 + 1e-12)) best = g;
  return grid[best];
}

FirstStageModel fit_first_stage(const std::vector<Triple>& rows,
                                const KnownDesign& design,
                                const FirstStageSpec& spec,
                                std::uint64_t seed) {
  spec.validate();
  const std::vector<SAPoint> pts = weighted_rows(rows, design, spec.regressor_id);
  const double lambda = spec.grid.size() > 1
                            ? cross_validate_lambda(pts, design, spec, seed)
                            : spec.grid.front();
  return fit_first_stage_at(pts, design, spec, lambda);
}

}  // namespace ope
