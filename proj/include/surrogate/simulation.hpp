#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "surrogate/csv.hpp"
#include "surrogate/data.hpp"
#include "surrogate/error.hpp"
#include "surrogate/estimators.hpp"
#include "surrogate/nuisance.hpp"
#include "surrogate/parallel.hpp"

namespace surrogate {

enum class Study { dimension, misspecification, sample_size, explanatory };

constexpr std::string_view to_string(Study s) noexcept {
  switch (s) {
    case Study::dimension: return "dimension";
    case Study::misspecification: return "misspec";
    case Study::sample_size: return "samplesize";
    case Study::explanatory: return "explanatory";
  }
  return "unknown";
}

inline Study parse_study(std::string_view name) {
  if (name == "dimension") return Study::dimension;
  if (name == "misspec" || name == "misspecification") return Study::misspecification;
  if (name == "samplesize" || name == "sample_size") return Study::sample_size;
  if (name == "explanatory") return Study::explanatory;
  fail(ErrorKind::invalid_argument, "unknown study '" + std::string(name) +
                                        "' (expected dimension, misspec, samplesize, explanatory)");
}

/// Seed of the one-off coefficient draws. Kept apart from replication seeds so
/// that the coefficients stay fixed while replications vary.
inline constexpr std::uint64_t kCoefficientSeed = 20240917;

/// S ~ N(0, I_M); W ~ Bernoulli(expit(alpha0 + alpha'S)) in the experimental
/// sample; Y ~ Bernoulli(expit(gamma0 + gamma'S)) in the observational sample.
struct DgpSpec {
  Study study = Study::dimension;
  double grid_value = 0.0;
  Eigen::Index m_surrogates = 1;
  Eigen::Index n_exp = 500;
  Eigen::Index n_obs = 500;
  Vector alpha;
  Vector gamma;
  double alpha0 = 0.0;
  double gamma0 = 0.0;
  std::string coef_rule;
  std::optional<Eigen::Index> k_used;
  std::uint64_t coef_seed = kCoefficientSeed;

  Eigen::Index analyst_columns() const { return k_used.value_or(m_surrogates); }

  void validate() const {
    if (m_surrogates < 1) fail(ErrorKind::invalid_argument, "at least one surrogate is required");
    if (alpha.size() != m_surrogates || gamma.size() != m_surrogates) {
      fail(ErrorKind::invalid_argument, "coefficient lengths must equal the number of surrogates");
    }
    if (k_used && (*k_used < 1 || *k_used > m_surrogates)) {
      fail(ErrorKind::invalid_argument, "k_used must lie in [1, M]");
    }
    if (n_exp < 2 || n_obs < 2) fail(ErrorKind::invalid_argument, "each sample needs >= 2 units");
  }
};

/// Draws one replication. Draw order: experimental S (row by row), W, then
/// observational S, Y; all from one mt19937_64 seeded with `rep_seed`.
inline std::pair<ExperimentalSample, ObservationalSample> draw_dataset(const DgpSpec& spec,
                                                                       std::uint64_t rep_seed) {
  spec.validate();
  std::mt19937_64 rng(rep_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index m = spec.m_surrogates;
  auto draw_s = [&](Eigen::Index n) {
    Matrix s(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) s(i, j) = normal(rng);
    }
    return s;
  };
  auto bernoulli = [&](const Matrix& s, const Vector& coef, double intercept) {
    Vector out(s.rows());
    const Vector eta = (s * coef).array() + intercept;
    for (Eigen::Index i = 0; i < s.rows(); ++i) out(i) = unif(rng) < detail::expit_raw(eta(i)) ? 1.0 : 0.0;
    return out;
  };

  Matrix s_exp = draw_s(spec.n_exp);
  Vector w = bernoulli(s_exp, spec.alpha, spec.alpha0);
  Matrix s_obs = draw_s(spec.n_obs);
  Vector y = bernoulli(s_obs, spec.gamma, spec.gamma0);
  return {ExperimentalSample(std::move(w), std::move(s_exp)),
          ObservationalSample(std::move(y), std::move(s_obs))};
}

// ---------------------------------------------------------------------------
// True effect

namespace detail {

inline double normal_pdf(double z) noexcept {
  return 0.3989422804014327 * std::exp(-0.5 * z * z);
}

/// E[f(Z)], Z ~ N(0,1), by adaptive Gauss-Kronrod on two half-lines split at `split`.
template <class F>
double gaussian_expectation(F f, double split = 0.0) {
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  split = std::clamp(split, -8.0, 8.0);
  auto g = [&](double z) { return f(z) * normal_pdf(z); };
  return gauss_kronrod<double, 61>::integrate(g, -inf, split, 20, 1e-13) +
         gauss_kronrod<double, 61>::integrate(g, split, inf, 20, 1e-13);
}

}  // namespace detail

/// tau = E[h(S) | W=1] - E[h(S) | W=0], h(s) = expit(gamma0 + gamma's).
/// (alpha'S, gamma'S) is bivariate normal, so the expectations reduce to a
/// one- or two-dimensional Gaussian integral evaluated by adaptive quadrature.
inline double true_tau(const DgpSpec& spec) {
  spec.validate();
  const double su2 = spec.alpha.squaredNorm();
  const double sv2 = spec.gamma.squaredNorm();
  if (su2 == 0.0 || sv2 == 0.0) return 0.0;
  const double su = std::sqrt(su2);
  const double c = spec.alpha.dot(spec.gamma);
  const double slope = c / su;  // V = slope * Z1 + sd_rest * Z2
  const double rest2 = sv2 - slope * slope;
  // Parallel coefficients leave only rounding noise in rest2.
  const double sd_rest = rest2 > 1e-12 * sv2 ? std::sqrt(rest2) : 0.0;
  const double a0 = spec.alpha0;
  const double g0 = spec.gamma0;

  auto h_given_z1 = [&](double z1) {
    const double mean = g0 + slope * z1;
    if (sd_rest == 0.0) return detail::expit_raw(mean);
    return detail::gaussian_expectation(
        [&](double z2) { return detail::expit_raw(mean + sd_rest * z2); }, -mean / sd_rest);
  };
  const double split = -a0 / su;
  const double p_treat =
      detail::gaussian_expectation([&](double z) { return detail::expit_raw(a0 + su * z); }, split);
  const double joint = detail::gaussian_expectation(
      [&](double z) { return detail::expit_raw(a0 + su * z) * h_given_z1(z); }, split);
  const double h_mean = detail::gaussian_expectation(h_given_z1, slope != 0.0 ? -g0 / slope : 0.0);
  return joint / p_treat - (h_mean - joint) / (1.0 - p_treat);
}

struct MonteCarloTau {
  double value = 0.0;
  double se = 0.0;
};

/// Plain Monte Carlo estimate of true_tau from `draws` draws of S in R^M,
/// using the ratio form E[h p]/E[p] - E[h (1-p)]/E[1-p] with a delta-method SE.
inline MonteCarloTau true_tau_monte_carlo(const DgpSpec& spec, std::int64_t draws,
                                          std::uint64_t seed) {
  spec.validate();
  if (draws < 2) fail(ErrorKind::invalid_argument, "need at least 2 draws");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index m = spec.m_surrogates;
  std::vector<double> hs(static_cast<std::size_t>(draws)), ps(static_cast<std::size_t>(draws));
  double sa = 0.0, sb = 0.0, sc = 0.0;
  Vector s(m);
  for (std::int64_t i = 0; i < draws; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) s(j) = normal(rng);
    const double p = detail::expit_raw(spec.alpha0 + spec.alpha.dot(s));
    const double h = detail::expit_raw(spec.gamma0 + spec.gamma.dot(s));
    hs[static_cast<std::size_t>(i)] = h;
    ps[static_cast<std::size_t>(i)] = p;
    sa += h * p;
    sb += p;
    sc += h * (1.0 - p);
  }
  const double n = static_cast<double>(draws);
  const double b = sb / n, d = 1.0 - b;
  const double t1 = sa / sb, t0 = sc / (n - sb);
  double ss = 0.0, mean_if = 0.0;
  std::vector<double> infl(static_cast<std::size_t>(draws));
  for (std::size_t i = 0; i < infl.size(); ++i) {
    const double p = ps[i], h = hs[i];
    infl[i] = (h * p - t1 * p) / b - (h * (1.0 - p) - t0 * (1.0 - p)) / d;
    mean_if += infl[i];
  }
  mean_if /= n;
  for (double v : infl) ss += (v - mean_if) * (v - mean_if);
  return {t1 - t0, std::sqrt(ss / (n - 1.0) / n)};
}

struct Calibration {
  double scale = 0.0;
  double alpha0 = 0.0;
  double gamma0 = 0.0;
  double achieved_tau = 0.0;
};

/// Finds c >= 0 with true_tau(alpha = gamma = c * direction) within
/// `tolerance` of `target` by bisection; intercepts stay at 0. tau(c) rises
/// from 0 towards 1 as c grows, so targets outside [0, tau(c_max)) are
/// reported as unattainable together with the supremum reached.
inline Calibration calibrate_tau(double target, const Vector& direction, double tolerance = 1e-3,
                                 double c_max = 1e4) {
  if (direction.size() < 1 || !(direction.norm() > 0.0)) {
    fail(ErrorKind::invalid_argument, "direction must be a non-zero vector");
  }
  if (!(tolerance > 0.0)) fail(ErrorKind::invalid_argument, "tolerance must be positive");
  const Vector dir = direction / direction.norm();
  DgpSpec spec;
  spec.m_surrogates = dir.size();
  auto tau_at = [&](double c) {
    spec.alpha = c * dir;
    spec.gamma = spec.alpha;
    return true_tau(spec);
  };
  Calibration out;
  if (std::abs(target) < tolerance) return out;
  const double sup = tau_at(c_max);
  if (!(target > 0.0) || target >= sup) {
    fail(ErrorKind::unattainable,
         "target effect " + csv::format_double(target) +
             " is unattainable; reachable range is [0, " + csv::format_double(sup) + ")");
  }
  double lo = 0.0, hi = 1.0;
  while (tau_at(hi) < target) {
    lo = hi;
    hi = std::min(2.0 * hi, c_max);
  }
  double c = 0.5 * (lo + hi);
  double tau = tau_at(c);
  for (int it = 0; it < 200 && std::abs(tau - target) >= tolerance; ++it) {
    (tau < target ? lo : hi) = c;
    c = 0.5 * (lo + hi);
    tau = tau_at(c);
  }
  out.scale = c;
  out.achieved_tau = tau;
  return out;
}

// ---------------------------------------------------------------------------
// Study specifications

namespace detail {

inline Vector coefficient_draw(std::uint64_t seed, std::uint64_t stream, Eigen::Index n) {
  std::mt19937_64 rng(derive_seed(seed, stream));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
  return z;
}

inline Eigen::Index integral_grid(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi) || v != std::floor(v)) {
    fail(ErrorKind::invalid_argument, std::string(what) + " must be an integer in [" +
                                          csv::format_double(lo) + ", " + csv::format_double(hi) +
                                          "], got " + csv::format_double(v));
  }
  return static_cast<Eigen::Index>(v);
}

}  // namespace detail

inline constexpr double kSampleSizeTarget = 0.5;

/// Specification of one grid point of a study.
///   dimension      grid = M in [1,200]; alpha = gamma = z[0..M) / sqrt(M) from a
///                  fixed 200-vector z of standard normals; N_E = N_O = 500.
///   misspec        grid = K in [1,250]; M = 250, alpha_k = gamma_k = k^-1/2 / 3,
///                  analyst uses the first K surrogates; N_E = N_O = 500.
///   samplesize     grid = q; N = 1000, N_E = round(1000 q); M = 10;
///                  alpha = gamma = c * z/|z| with c calibrated to tau = 0.5.
///   explanatory    grid = row 1..4; M = 10, N_E = N_O = 500;
///                  alpha = sqrt(va/M) z_a, gamma = sqrt(vg/M) z_g with fixed
///                  draws z_a, z_g and (va, vg) = (1,1), (4,1), (1,4), (4,4).
inline DgpSpec make_spec(Study study, double grid_value, std::uint64_t coef_seed = kCoefficientSeed) {
  DgpSpec spec;
  spec.study = study;
  spec.grid_value = grid_value;
  spec.coef_seed = coef_seed;
  switch (study) {
    case Study::dimension: {
      const Eigen::Index m = detail::integral_grid(grid_value, 1, 200, "dimension M");
      const Vector z = detail::coefficient_draw(coef_seed, 0, 200);
      spec.m_surrogates = m;
      spec.alpha = z.head(m) / std::sqrt(static_cast<double>(m));
      spec.gamma = spec.alpha;
      spec.coef_rule = "alpha = gamma ~ N(0, 1/M), prefix of one fixed draw";
      break;
    }
    case Study::misspecification: {
      const Eigen::Index k = detail::integral_grid(grid_value, 1, 250, "misspecification K");
      spec.m_surrogates = 250;
      spec.alpha.resize(250);
      for (Eigen::Index j = 0; j < 250; ++j) spec.alpha(j) = (1.0 / 3.0) / std::sqrt(static_cast<double>(j + 1));
      spec.gamma = spec.alpha;
      spec.k_used = k;
      spec.coef_rule = "alpha_k = gamma_k = (1/3) k^(-1/2); analyst uses first K";
      break;
    }
    case Study::sample_size: {
      if (!(grid_value > 0.0 && grid_value < 1.0)) {
        fail(ErrorKind::invalid_argument, "sample-size q must lie in (0,1)");
      }
      spec.n_exp = static_cast<Eigen::Index>(std::lround(1000.0 * grid_value));
      spec.n_obs = 1000 - spec.n_exp;
      if (spec.n_exp < 2 || spec.n_obs < 2) {
        fail(ErrorKind::invalid_argument, "sample-size q leaves fewer than 2 units in a sample");
      }
      spec.m_surrogates = 10;
      const Vector z = detail::coefficient_draw(coef_seed, 1, 10);
      const Calibration cal = calibrate_tau(kSampleSizeTarget, z, 1e-10);
      spec.alpha = cal.scale * z / z.norm();
      spec.gamma = spec.alpha;
      spec.coef_rule = "alpha = gamma = c * direction, c calibrated to tau = 0.5";
      break;
    }
    case Study::explanatory: {
      const Eigen::Index row = detail::integral_grid(grid_value, 1, 4, "explanatory row");
      static constexpr double va[4] = {1.0, 4.0, 1.0, 4.0};
      static constexpr double vg[4] = {1.0, 1.0, 4.0, 4.0};
      spec.m_surrogates = 10;
      const Vector za = detail::coefficient_draw(coef_seed, 2, 10);
      const Vector zg = detail::coefficient_draw(coef_seed, 3, 10);
      spec.alpha = std::sqrt(va[row - 1] / 10.0) * za;
      spec.gamma = std::sqrt(vg[row - 1] / 10.0) * zg;
      spec.coef_rule = "alpha ~ N(0, va/M), gamma ~ N(0, vg/M), fixed draws rescaled per row";
      break;
    }
  }
  return spec;
}

inline std::vector<double> default_grid(Study study) {
  switch (study) {
    case Study::dimension: return {1, 10, 50, 100, 200};
    case Study::misspecification: return {1, 5, 25, 100, 250};
    case Study::sample_size: return {0.05, 0.25, 0.5, 0.75, 0.95};
    case Study::explanatory: return {1, 2, 3, 4};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct EstimatorSummary {
  double abs_bias = 0.0;
  double sd = 0.0;
  double mean_estimate = 0.0;
  double mc_se = 0.0;
  int reps = 0;
  int successes = 0;
  int failures = 0;
};

struct McResult {
  EstimatorSummary score;  // tau-hat^O
  EstimatorSummary index;  // tau-hat^E
  double true_tau = 0.0;
  int reps = 0;
  int separation_events = 0;
};

struct ReplicationEstimates {
  double score = std::numeric_limits<double>::quiet_NaN();
  double index = std::numeric_limits<double>::quiet_NaN();
  bool separation = false;
};

/// One replication of the simplified estimators (constant e = mean W,
/// constant t = q, no trimming): tau-hat^O is the Hajek r-hat contrast of Y,
/// tau-hat^E the arm contrast of h-hat(S). A separated surrogate-score fit is
/// refitted with ridge 1e-6 and flagged.
inline ReplicationEstimates run_replication(const DgpSpec& spec, std::uint64_t rep_seed) {
  auto [exp, obs] = draw_dataset(spec, rep_seed);
  const Eigen::Index k = spec.analyst_columns();
  const Matrix s_exp = exp.s().leftCols(k);
  const Matrix s_obs = obs.s().leftCols(k);
  const FeatureLayout layout{k, 0, false};
  const EstimatorOptions no_trim{0.0};
  const double q = static_cast<double>(exp.size()) / static_cast<double>(exp.size() + obs.size());
  const double p = exp.w().mean();

  ReplicationEstimates out;
  try {
    LogisticModel r;
    try {
      r = fit_logistic(s_exp, exp.w(), {}, layout);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::separation) throw;
      out.separation = true;
      LogisticOptions ridge;
      ridge.ridge = 1e-6;
      r = fit_logistic(s_exp, exp.w(), ridge, layout);
    }
    const Matrix no_x(obs.size(), 0);
    out.score = estimate_score_from_scores(obs.y(), predict_scores(r, s_obs, no_x),
                                           Vector::Constant(obs.size(), p),
                                           Vector::Constant(obs.size(), q), q, no_trim)
                    .tau_hat;
  } catch (const Error&) {
  }
  try {
    const LinearModel h = fit_least_squares(s_obs, obs.y(), 0.0, layout);
    out.index = estimate_index_from_scores(exp.w(), Vector::Constant(exp.size(), p),
                                           predict_indices(h, s_exp, Matrix(exp.size(), 0)), no_trim)
                    .tau_hat;
  } catch (const Error&) {
  }
  return out;
}

namespace detail {

inline EstimatorSummary summarize(const std::vector<double>& v, double truth) {
  EstimatorSummary s;
  s.reps = static_cast<int>(v.size());
  double sum = 0.0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++s.successes;
    }
  }
  s.failures = s.reps - s.successes;
  if (s.successes == 0) return s;
  s.mean_estimate = sum / s.successes;
  double ss = 0.0;
  for (double x : v) {
    if (std::isfinite(x)) ss += (x - s.mean_estimate) * (x - s.mean_estimate);
  }
  s.sd = s.successes > 1 ? std::sqrt(ss / (s.successes - 1)) : 0.0;
  s.mc_se = s.sd / std::sqrt(static_cast<double>(s.successes));
  s.abs_bias = std::abs(s.mean_estimate - truth);
  return s;
}

}  // namespace detail

/// Replication b uses derive_seed(seed, b); results are aggregated in index
/// order, so the outcome is independent of `threads`.
inline McResult run_monte_carlo(const DgpSpec& spec, int reps, std::uint64_t seed,
                                std::size_t threads = default_thread_count(),
                                std::optional<double> truth = {}) {
  if (reps < 1) fail(ErrorKind::invalid_argument, "reps must be >= 1");
  spec.validate();
  std::vector<ReplicationEstimates> results(static_cast<std::size_t>(reps));
  parallel_for(results.size(), threads,
               [&](std::size_t b) { results[b] = run_replication(spec, derive_seed(seed, b)); });
  McResult out;
  out.reps = reps;
  out.true_tau = truth ? *truth : true_tau(spec);
  std::vector<double> score, index;
  for (const auto& r : results) {
    score.push_back(r.score);
    index.push_back(r.index);
    out.separation_events += r.separation;
  }
  out.score = detail::summarize(score, out.true_tau);
  out.index = detail::summarize(index, out.true_tau);
  if (out.score.successes == 0 && out.index.successes == 0) {
    fail(ErrorKind::study, "all " + std::to_string(reps) + " replications failed");
  }
  return out;
}

struct StudyRow {
  double grid_value = 0.0;
  DgpSpec spec;
  McResult result;
};

inline std::vector<StudyRow> run_study(Study study, const std::vector<double>& grid, int reps,
                                       std::uint64_t seed,
                                       std::size_t threads = default_thread_count(),
                                       std::uint64_t coef_seed = kCoefficientSeed) {
  if (grid.empty()) fail(ErrorKind::invalid_argument, "study grid is empty");
  if (reps < 1) fail(ErrorKind::invalid_argument, "reps must be >= 1");
  std::vector<StudyRow> rows;
  for (double g : grid) {
    StudyRow row;
    row.grid_value = g;
    row.spec = make_spec(study, g, coef_seed);
    row.result = run_monte_carlo(row.spec, reps, seed, threads);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Plot-ready CSV: grid_value,estimator,abs_bias_x100,sd_x100,reps,failures,true_tau.
/// Estimator "score" is tau-hat^O, "index" is tau-hat^E.
inline void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  csv::write_row(out, {"grid_value", "estimator", "abs_bias_x100", "sd_x100", "reps", "failures",
                       "true_tau"});
  for (const auto& row : rows) {
    for (const auto& [name, s] :
         {std::pair{"score", row.result.score}, std::pair{"index", row.result.index}}) {
      csv::write_row(out, {csv::format_double(row.grid_value), name,
                           csv::format_double(100.0 * s.abs_bias), csv::format_double(100.0 * s.sd),
                           std::to_string(s.reps), std::to_string(s.failures),
                           csv::format_double(row.result.true_tau)});
    }
  }
}

}  // namespace surrogate
