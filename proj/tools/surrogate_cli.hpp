#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "surrogate/surrogate.hpp"

namespace surrogate::cli {

struct NuisanceFlags {
  double ridge = 0.0;
  std::optional<double> ridge_e, ridge_r, ridge_t, ridge_h;
  std::string propensity = "logistic";
  std::optional<double> known_p;
  bool constant_t = false;
  bool interactions = false;

  void attach(CLI::App& app) {
    app.add_option("--ridge", ridge, "ridge penalty for every nuisance model")->check(CLI::NonNegativeNumber);
    app.add_option("--ridge-e", ridge_e, "ridge penalty for the propensity score")->check(CLI::NonNegativeNumber);
    app.add_option("--ridge-r", ridge_r, "ridge penalty for the surrogate score")->check(CLI::NonNegativeNumber);
    app.add_option("--ridge-t", ridge_t, "ridge penalty for the sampling score")->check(CLI::NonNegativeNumber);
    app.add_option("--ridge-h", ridge_h, "ridge penalty for the surrogate index")->check(CLI::NonNegativeNumber);
    app.add_option("--propensity", propensity, "propensity model: logistic, mean or known")
        ->check(CLI::IsMember({"logistic", "mean", "known"}));
    app.add_option("--known-p", known_p, "known treatment probability (implies --propensity known)");
    app.add_flag("--constant-t", constant_t, "use the constant sampling score t = q");
    app.add_flag("--interactions", interactions, "add all surrogate x covariate products");
  }

  NuisanceOptions options() const {
    NuisanceOptions o;
    o.ridge = ridge;
    o.ridge_e = ridge_e;
    o.ridge_r = ridge_r;
    o.ridge_t = ridge_t;
    o.ridge_h = ridge_h;
    o.constant_t = constant_t;
    o.interactions = interactions;
    if (known_p || propensity == "known") {
      if (!known_p) fail(ErrorKind::invalid_argument, "--propensity known needs --known-p");
      o.propensity = PropensityMode::known;
      o.known_p = *known_p;
    } else if (propensity == "mean") {
      o.propensity = PropensityMode::sample_mean;
    }
    return o;
  }
};

struct EstimateConfig {
  std::string exp_path, obs_path, single_path;
  std::string method = "all";
  std::string mode = "dim";
  double trim = 1e-6;
  int bootstrap = 0;
  std::uint64_t seed = 0;
  bool both_directions = false;
  std::string out_path;
  NuisanceFlags nuisance;
};

struct DiagnoseConfig {
  std::string exp_path, obs_path, out_path;
  double delta_s = 1.0;
  double delta_c = 1.0;
  NuisanceFlags nuisance;
};

struct BoundsConfig {
  std::string single_path, exp_path, obs_path, out_path;
  std::string variance_mode = "homoskedastic";
  bool two_sample = false;
  NuisanceFlags nuisance;
};

struct SimulateConfig {
  std::string study;
  int reps = 0;
  std::uint64_t seed = 0;
  std::uint64_t coef_seed = kCoefficientSeed;
  std::vector<double> grid;
  std::string out_prefix;
};

namespace detail {

inline void emit(const json& doc, const std::string& path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::io, "cannot write '" + path + "'");
  file << text;
}

inline void require(const std::string& value, const char* flag, const char* why) {
  if (value.empty()) fail(ErrorKind::invalid_argument, std::string(flag) + " is required " + why);
}

inline PooledDataset load_pair(const std::string& exp_path, const std::string& obs_path,
                               const char* why) {
  require(exp_path, "--exp", why);
  require(obs_path, "--obs", why);
  return pool(load_experimental(exp_path), load_observational(obs_path));
}

}  // namespace detail

/// Estimates for the requested methods. Bootstrap replicates refit the
/// nuisance models on each resample of both samples.
inline json run_estimate(const EstimateConfig& cfg) {
  if (cfg.bootstrap < 0 || cfg.bootstrap == 1) {
    fail(ErrorKind::invalid_argument, "--bootstrap must be 0 (off) or >= 2");
  }
  const EstimatorOptions eopt{cfg.trim};
  json reports = json::array();

  if (!cfg.single_path.empty()) {
    const SingleSample sample = load_single(cfg.single_path);
    const SingleSampleMode mode =
        cfg.mode == "index" ? SingleSampleMode::surrogate_index : SingleSampleMode::difference_in_means;
    const double ridge = cfg.nuisance.ridge;
    auto est = [&](const SingleSample& d) { return estimate_single_sample(d, mode, ridge).tau_hat; };
    EstimateReport rep = estimate_single_sample(sample, mode, ridge);
    if (cfg.bootstrap > 0) rep.se_bootstrap = bootstrap_se(est, sample, cfg.bootstrap, cfg.seed);
    reports.push_back(rep);
    return json{{"design", "single_sample"}, {"reports", reports}};
  }

  const char* why = "for two-sample estimation";
  const PooledDataset data = detail::load_pair(cfg.exp_path, cfg.obs_path, why);
  const NuisanceOptions nopt = cfg.nuisance.options();
  const NuisanceFits fits = fit_all(data, nopt);
  const MatchingOptions mopt{cfg.both_directions};

  std::vector<std::string> methods;
  if (cfg.method == "all") {
    methods = {"index", "score", "match", "linear"};
  } else {
    methods = {cfg.method};
  }
  for (const auto& m : methods) {
    std::function<double(const PooledDataset&)> est;
    EstimateReport rep;
    if (m == "index") {
      rep = estimate_index(data.experimental(), fits, eopt);
      est = [&](const PooledDataset& d) {
        return estimate_index(d.experimental(), fit_all(d, nopt), eopt).tau_hat;
      };
    } else if (m == "score") {
      rep = estimate_score(data.observational(), fits, data.q(), eopt);
      est = [&](const PooledDataset& d) {
        return estimate_score(d.observational(), fit_all(d, nopt), d.q(), eopt).tau_hat;
      };
    } else if (m == "match") {
      rep = estimate_matching(data.experimental(), data.observational(), mopt);
      est = [&](const PooledDataset& d) {
        return estimate_matching(d.experimental(), d.observational(), mopt).tau_hat;
      };
    } else {
      rep = estimate_linear_shortcut(data.experimental(), fits, eopt);
      est = [&](const PooledDataset& d) {
        return estimate_linear_shortcut(d.experimental(), fit_all(d, nopt), eopt).tau_hat;
      };
    }
    if (cfg.bootstrap > 0) rep.se_bootstrap = bootstrap_se(est, data, cfg.bootstrap, cfg.seed);
    reports.push_back(rep);
  }
  return json{{"design", "two_sample"},
              {"q", data.q()},
              {"n_exp", data.experimental().size()},
              {"n_obs", data.observational().size()},
              {"nuisance", fits},
              {"reports", reports}};
}

inline json run_diagnose(const DiagnoseConfig& cfg) {
  const PooledDataset data = detail::load_pair(cfg.exp_path, cfg.obs_path, "for diagnose");
  const NuisanceFits fits = fit_all(data, cfg.nuisance.options());
  return json{{"bias_bound", bias_bound(data.experimental(), fits, cfg.delta_s, cfg.delta_c)},
              {"overlap", overlap_summary(data, fits)}};
}

inline json run_bounds(const BoundsConfig& cfg) {
  if (cfg.two_sample) {
    const PooledDataset data = detail::load_pair(cfg.exp_path, cfg.obs_path, "with --two-sample");
    if (data.n_covariates() > 0) {
      fail(ErrorKind::unsupported,
           "the two-sample efficiency bound is only available without covariates (K = 0)");
    }
    NuisanceOptions nopt = cfg.nuisance.options();
    nopt.constant_t = true;
    const NuisanceFits fits = fit_all(data, nopt);
    return json{{"design", "two_sample"}, {"efficiency_bounds", efficiency_bound_two_sample(data, fits)}};
  }
  detail::require(cfg.single_path, "--single", "(or use --two-sample with --exp and --obs)");
  const SingleSample sample = load_single(cfg.single_path);
  const VarianceMode mode =
      cfg.variance_mode == "per_stratum" ? VarianceMode::per_stratum : VarianceMode::homoskedastic;
  return json{{"design", "single_sample"},
              {"efficiency_bounds", efficiency_bounds_single_sample(sample, mode, cfg.nuisance.ridge)}};
}

/// Runs a study and writes <prefix>.csv and <prefix>.manifest.json. The
/// manifest records everything needed to rerun the study except the thread
/// count, which does not affect results.
inline json run_simulate(const SimulateConfig& cfg, std::size_t threads = default_thread_count()) {
  const Study study = parse_study(cfg.study);
  if (cfg.reps < 1) fail(ErrorKind::invalid_argument, "--reps must be >= 1");
  const std::vector<double> grid = cfg.grid.empty() ? default_grid(study) : cfg.grid;
  const auto rows = run_study(study, grid, cfg.reps, cfg.seed, threads, cfg.coef_seed);

  const std::string prefix =
      cfg.out_prefix.empty() ? "study_" + std::string(to_string(study)) : cfg.out_prefix;
  {
    std::ofstream csv_out(prefix + ".csv", std::ios::binary);
    if (!csv_out) fail(ErrorKind::io, "cannot write '" + prefix + ".csv'");
    write_study_csv(csv_out, rows);
  }
  json specs = json::array(), results = json::array();
  for (const auto& row : rows) {
    specs.push_back(row.spec);
    results.push_back(json{{"grid_value", row.grid_value}, {"result", row.result}});
  }
  const json manifest{
      {"study", std::string(to_string(study))},
      {"grid", grid},
      {"reps", cfg.reps},
      {"seed", cfg.seed},
      {"coefficient_seed", cfg.coef_seed},
      {"replication_seed_rule", "rep_seed(b) = mix64(mix64(seed) ^ (b + 1)), SplitMix64 finalizer"},
      {"estimators", {{"score", "Hajek surrogate-score contrast of Y"},
                      {"index", "arm contrast of the least-squares surrogate index"}}},
      {"specs", specs},
      {"results", results},
      {"versions",
       {{"surrogate", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                     std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                     std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
  detail::emit(manifest, prefix + ".manifest.json", std::cout);
  return json{{"csv", prefix + ".csv"}, {"manifest", prefix + ".manifest.json"}, {"rows", results}};
}

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 2 invalid input or configuration, 3 estimation failure. Errors are one
/// line on `err`: "error[<kind>]: <message>".
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Treatment effects on a long-term outcome from short-term surrogates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  EstimateConfig est;
  auto* estimate = app.add_subcommand("estimate", "estimate the average treatment effect");
  estimate->add_option("--exp", est.exp_path, "experimental sample CSV (w,s1..sM[,x1..xK])");
  estimate->add_option("--obs", est.obs_path, "observational sample CSV (y,s1..sM[,x1..xK])");
  estimate->add_option("--single", est.single_path, "single-sample CSV (w,y,s1..sM[,x1..xK])");
  estimate->add_option("--method", est.method, "index, score, match, linear or all")
      ->check(CLI::IsMember({"index", "score", "match", "linear", "all"}));
  estimate->add_option("--mode", est.mode, "single-sample mode: dim or index")
      ->check(CLI::IsMember({"dim", "index"}));
  estimate->add_option("--trim", est.trim, "clamp scores to [eps, 1-eps]; 0 disables");
  estimate->add_option("--bootstrap", est.bootstrap, "bootstrap replicates (0 = off)");
  estimate->add_option("--seed", est.seed, "bootstrap seed");
  estimate->add_flag("--both-directions", est.both_directions, "matching: impute for controls too");
  estimate->add_option("--out", est.out_path, "output JSON path (default stdout)");
  est.nuisance.attach(*estimate);

  DiagnoseConfig diag;
  auto* diagnose = app.add_subcommand("diagnose", "bias bounds and score overlap");
  diagnose->add_option("--exp", diag.exp_path, "experimental sample CSV");
  diagnose->add_option("--obs", diag.obs_path, "observational sample CSV");
  diagnose->add_option("--delta-s", diag.delta_s, "bound on the surrogacy violation")->check(CLI::NonNegativeNumber);
  diagnose->add_option("--delta-c", diag.delta_c, "bound on the comparability violation")->check(CLI::NonNegativeNumber);
  diagnose->add_option("--out", diag.out_path, "output JSON path (default stdout)");
  diag.nuisance.attach(*diagnose);

  BoundsConfig bcfg;
  auto* bounds = app.add_subcommand("bounds", "semiparametric efficiency bounds");
  bounds->add_option("--single", bcfg.single_path, "single-sample CSV");
  bounds->add_option("--variance-mode", bcfg.variance_mode, "homoskedastic or per_stratum")
      ->check(CLI::IsMember({"homoskedastic", "per_stratum"}));
  bounds->add_flag("--two-sample", bcfg.two_sample, "two-sample bound (constant t, no covariates)");
  bounds->add_option("--exp", bcfg.exp_path, "experimental sample CSV");
  bounds->add_option("--obs", bcfg.obs_path, "observational sample CSV");
  bounds->add_option("--out", bcfg.out_path, "output JSON path (default stdout)");
  bcfg.nuisance.attach(*bounds);

  SimulateConfig sim;
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo study");
  simulate->add_option("--study", sim.study, "dimension, misspec, samplesize or explanatory")->required();
  simulate->add_option("--reps", sim.reps, "replications per grid point")->required();
  simulate->add_option("--seed", sim.seed, "master seed")->required();
  simulate->add_option("--coef-seed", sim.coef_seed, "seed of the fixed coefficient draws");
  simulate->add_option("--grid", sim.grid, "grid values (default: the study's grid)")->delimiter(',');
  simulate->add_option("--out", sim.out_prefix, "output prefix for .csv and .manifest.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "error[usage]: " << msg << "\n";
    return 2;
  }

  try {
    if (*estimate) {
      detail::emit(run_estimate(est), est.out_path, out);
    } else if (*diagnose) {
      detail::emit(run_diagnose(diag), diag.out_path, out);
    } else if (*bounds) {
      detail::emit(run_bounds(bcfg), bcfg.out_path, out);
    } else if (*simulate) {
      const json summary = run_simulate(sim);
      out << "wrote " << summary["csv"].get<std::string>() << " and "
          << summary["manifest"].get<std::string>() << "\n";
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "error[" << to_string(e.kind()) << "]: " << msg << "\n";
    return is_input_error(e.kind()) ? 2 : 3;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace surrogate::cli
