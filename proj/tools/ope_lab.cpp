// ope-lab: simulation harness and diagnostics front end.
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ope/complexity.hpp"
#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/lowerbounds.hpp"
#include "ope/simlab.hpp"

using json = nlohmann::json;
using namespace ope;

namespace {

void print_json(const json& j) { std::cout << j.dump() << "\n"; }

// non-finite doubles are not valid JSON numbers
json num(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

struct SimulateArgs {
  std::string config;
  std::uint64_t seed = 0;
  int reps = 0;
  std::string out;
  int threads = 0;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub) {
  ExperimentConfig cfg = load_config(a.config);
  if (sub.count("--seed")) cfg.master_seed = a.seed;
  if (sub.count("--reps")) cfg.reps = a.reps;
  if (sub.count("--out")) cfg.output_path = a.out;
  if (sub.count("--threads")) cfg.threads = a.threads;
  cfg.validate();
  const ResultsTable table = run_experiment(cfg);
  write_results_csv(table, cfg.output_path);
  print_json({{"output", cfg.output_path}, {"rows", table.rows.size()}});
  return 0;
}

struct EstimateArgs {
  std::string data, instance, estimator;
  std::uint64_t seed = 1;
  int folds = 5;
};

int cmd_estimate(const EstimateArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  const Dataset data = read_dataset_csv(a.data);
  const KnownDesign design = known_design(inst);
  EstimateReport rep;
  if (a.estimator == "ipw") {
    rep = ipw_estimate(data, design);
  } else if (a.estimator == "oracle") {
    rep = oracle_estimate(data, inst);
  } else if (a.estimator.rfind("two-stage-", 0) == 0) {
    FirstStageSpec spec;
    spec.regressor_id = a.estimator.substr(std::string("two-stage-").size());
    spec.folds = a.folds;
    spec.grid = default_lambda_grid();
    if (spec.regressor_id == "l1-constrained" || spec.regressor_id == "weighted-linear") {
      spec.feature_map = "affine-by-action";
      spec.grid = {0.0};
    } else if (spec.regressor_id == "weighted-isotonic") {
      spec.grid = {0.0};  // nothing to tune
    }
    rep = two_stage_estimate(data, design, spec, a.seed).report;
  } else {
    throw Error("unknown-estimator", "unknown estimator " + a.estimator);
  }
  std::cout << estimate_csv_header() << "\n" << estimate_csv_row(rep) << "\n";
  return 0;
}

struct SampleArgs {
  std::string instance, out;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
};

int cmd_sample(const SampleArgs& a) {
  const Dataset d = sample_dataset(load_instance(a.instance), a.n, a.seed);
  if (a.out.empty())
    write_dataset_csv(d, std::cout);
  else
    write_dataset_csv(d, a.out);
  return 0;
}

struct DiagnoseArgs {
  std::string instance, features = "onehot-sa", kind = "s", source = "closed";
  std::size_t m = 1000;
  double alpha1 = 1.0, alpha2 = 1.0, radius = 1.0;
  int reps = 2000;
  std::uint64_t seed = 1;
  std::vector<double> profile;
  std::string shatter;
  std::size_t p = 4, s = 2;
  std::string link = "identity";
};

FeatureMap features_for(const ProblemInstance& inst, const std::string& id) {
  std::vector<double> states;
  if (inst.states.is_finite()) states = inst.states.states;
  return make_feature_map(id, inst.actions.actions, states);
}

int cmd_diagnose(const DiagnoseArgs& a) {
  if (!a.shatter.empty()) {
    ShatteringCertificate cert;
    if (a.shatter == "hadamard")
      cert = hadamard_glm_shatter(a.p, make_link(a.link), 0.5, 1.0);
    else if (a.shatter == "sparse")
      cert = sparse_packing_shatter(a.p, a.s);
    else
      throw Error("bad-argument", "--shatter takes hadamard or sparse");
    const CertificateCheck c = verify_certificate(cert);
    print_json({{"certificate", cert.description},
                {"dimension", cert.dimension()},
                {"patterns", c.patterns},
                {"exhaustive", c.exhaustive},
                {"max_error", num(c.max_error)},
                {"witnesses_in_class", c.witnesses_in_class},
                {"passed", c.passed}});
    return c.passed ? 0 : 3;
  }

  if (a.instance.empty()) throw Error("bad-argument", "diagnose needs --instance or --shatter");
  const ProblemInstance inst = load_instance(a.instance);
  const FeatureMap fm = features_for(inst, a.features);
  const Eigen::MatrixXd sigma = omega_gram(inst, fm);
  const LocalizedClassSpec spec = LocalizedClassSpec::linear_ellipsoid(fm, sigma, a.radius);

  if (!a.profile.empty()) {
    const auto prof = rademacher_R_profile(inst, spec, a.m, a.profile, a.reps, a.seed);
    write_profile_csv(prof, std::cout);
    return 0;
  }

  CriticalRadiusOptions opt;
  if (a.kind == "s")
    opt.kind = RadiusKind::S;
  else if (a.kind == "r")
    opt.kind = RadiusKind::R;
  else
    throw Error("bad-argument", "--kind takes s or r");
  if (a.source == "closed")
    opt.source = ComplexitySource::ClosedFormLinear;
  else if (a.source == "mc")
    opt.source = ComplexitySource::MonteCarlo;
  else
    throw Error("bad-argument", "--source takes closed or mc");
  opt.alpha1 = a.alpha1;
  opt.alpha2 = a.alpha2;
  opt.reps = a.reps;
  opt.seed = a.seed;
  const CriticalRadiusResult r = critical_radius(inst, spec, a.m, opt);
  const McEstimate S = rademacher_S_mc(inst, spec, a.m, Multiplier::OutcomeNoise, a.reps, a.seed);
  const McEstimate R = rademacher_R_mc(inst, spec, a.m, a.reps, a.seed);
  print_json({{"instance", inst.id},
              {"features", fm.id},
              {"m", a.m},
              {"kind", a.kind},
              {"source", a.source},
              {"critical_radius", num(r.radius)},
              {"evaluations", r.evaluations},
              {"radius", a.radius},
              {"S_m", num(S.estimate)},
              {"S_m_se", num(S.se)},
              {"R_m", num(R.estimate)},
              {"R_m_se", num(R.se)}});
  return 0;
}

struct LowerboundArgs {
  std::string instance, construction = "tilted";
  int n = 64;
  double s = 0.0, delta = 1.0;
  int reps = 2000;
  std::uint64_t seed = 1;
};

int cmd_lowerbound(const LowerboundArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  if (a.construction == "tilted") {
    print_json(to_json(tilted_instance(inst, a.n)));
  } else if (a.construction == "sigma-pair") {
    print_json(to_json(sigma_perturbed_pair(inst, a.n)));
  } else if (a.construction == "mixture") {
    const double d = a.delta;
    StateActionFn delta = [d](double, int) { return d; };
    double s = a.s;
    if (s <= 0.0) {
      // default to the cap 1/(2M)
      std::vector<double> z, w;
      for (std::size_t i = 0; i < inst.states.states.size(); ++i)
        for (std::size_t k = 0; k < inst.actions.size(); ++k) {
          const double x = inst.states.states[i];
          const int act = inst.actions.actions[k];
          const double p = inst.propensity(x, act);
          z.push_back(inst.weight(x, act) * d / p);
          w.push_back(inst.states.probs[i] * inst.actions.base_weights[k] * p);
        }
      s = 1.0 / (2.0 * moment_ratio(z, w));
    }
    print_json(to_json(delta_mixture(inst, delta, s, a.reps, a.seed)));
  } else {
    throw Error("bad-argument", "--construction takes tilted, sigma-pair or mixture");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ope-lab: off-policy functional estimation lab"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "run a Monte Carlo experiment grid");
  s_sim->add_option("--config", sim.config, "experiment config (JSON)")->required();
  s_sim->add_option("--seed", sim.seed, "master seed override");
  s_sim->add_option("--reps", sim.reps, "replications override");
  s_sim->add_option("--out", sim.out, "output CSV path");
  s_sim->add_option("--threads", sim.threads, "worker threads");

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "estimate tau on a dataset CSV");
  s_est->add_option("--data", est.data, "dataset CSV (x,a,y)")->required();
  s_est->add_option("--instance", est.instance, "instance description (JSON)")->required();
  s_est->add_option("--estimator", est.estimator,
                    "ipw, oracle or two-stage-<regressor>")->required();
  s_est->add_option("--seed", est.seed, "cross-validation seed");
  s_est->add_option("--folds", est.folds, "cross-validation folds");

  SampleArgs smp;
  auto* s_smp = app.add_subcommand("sample", "draw a dataset from an instance");
  s_smp->add_option("--instance", smp.instance)->required();
  s_smp->add_option("--n", smp.n);
  s_smp->add_option("--seed", smp.seed);
  s_smp->add_option("--out", smp.out, "output path (stdout when omitted)");

  DiagnoseArgs dg;
  auto* s_dg = app.add_subcommand("diagnose", "complexities, critical radii and certificates");
  s_dg->add_option("--instance", dg.instance);
  s_dg->add_option("--features", dg.features, "feature map id");
  s_dg->add_option("--m", dg.m, "sample size m");
  s_dg->add_option("--kind", dg.kind, "critical radius kind: s or r");
  s_dg->add_option("--source", dg.source, "closed or mc");
  s_dg->add_option("--alpha1", dg.alpha1);
  s_dg->add_option("--alpha2", dg.alpha2);
  s_dg->add_option("--radius", dg.radius, "localization radius for S_m, R_m");
  s_dg->add_option("--reps", dg.reps);
  s_dg->add_option("--seed", dg.seed);
  s_dg->add_option("--profile", dg.profile, "radii for an R_m(r) profile CSV")->delimiter(',');
  s_dg->add_option("--shatter", dg.shatter, "hadamard or sparse certificate");
  s_dg->add_option("--p", dg.p);
  s_dg->add_option("--s", dg.s);
  s_dg->add_option("--link", dg.link, "identity, tanh or cubic");

  LowerboundArgs lb;
  auto* s_lb = app.add_subcommand("lowerbound", "finite-instance lower-bound constructions");
  s_lb->add_option("--instance", lb.instance)->required();
  s_lb->add_option("--construction", lb.construction, "tilted, sigma-pair or mixture");
  s_lb->add_option("--n", lb.n);
  s_lb->add_option("--s", lb.s, "mixture tweak; defaults to the cap");
  s_lb->add_option("--delta", lb.delta, "constant delta for the mixture");
  s_lb->add_option("--reps", lb.reps);
  s_lb->add_option("--seed", lb.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_json({{"error", "usage"}, {"message", e.what()}});
    return 2;
  }

  try {
    if (*s_sim) return cmd_simulate(sim, *s_sim);
    if (*s_est) return cmd_estimate(est);
    if (*s_smp) return cmd_sample(smp);
    if (*s_dg) return cmd_diagnose(dg);
    if (*s_lb) return cmd_lowerbound(lb);
  } catch (const Error& e) {
    print_json({{"error", e.code()}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    print_json({{"error", "internal"}, {"message", e.what()}});
    return 1;
  }
  return 0;
}
