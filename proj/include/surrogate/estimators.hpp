#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "surrogate/data.hpp"
#include "surrogate/error.hpp"
#include "surrogate/nuisance.hpp"
#include "surrogate/parallel.hpp"

namespace surrogate {

enum class Method {
  index,
  score,
  linear_shortcut,
  matching,
  single_sample_dim,
  single_sample_index,
};

constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::index: return "index";
    case Method::score: return "score";
    case Method::linear_shortcut: return "linear_shortcut";
    case Method::matching: return "matching";
    case Method::single_sample_dim: return "single_sample_dim";
    case Method::single_sample_index: return "single_sample_index";
  }
  return "unknown";
}

/// Summary of the normalized (Hajek) weights within one arm.
struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  double ess = 0.0;  // (sum w)^2 / sum w^2
  double sum = 0.0;  // of the normalized weights, 1 up to rounding
  Eigen::Index n = 0;
};

struct EstimateReport {
  double tau_hat = 0.0;
  Method method = Method::index;
  WeightSummary treated;
  WeightSummary control;
  std::optional<double> se_bootstrap;
  Eigen::Index n_treated = 0;
  Eigen::Index n_control = 0;
  double trim_epsilon = 0.0;
  Eigen::Index n_trimmed = 0;
};

struct TauSurrogates {
  Vector tau_s;
};

struct EstimatorOptions {
  /// Scores are clamped to [trim, 1 - trim]; 0 disables trimming.
  double trim = 1e-6;
};

namespace detail {

struct HajekMean {
  double mean = 0.0;
  WeightSummary summary;
};

/// Weighted mean with weights normalized to sum to one over rows with w > 0.
inline HajekMean hajek(const Vector& values, const Vector& weights, const char* arm) {
  double total = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) > 0.0) {
      total += weights(i);
      ++used;
    }
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    fail(ErrorKind::degenerate_arm, std::string(arm) + " arm has zero or non-finite total weight");
  }
  HajekMean out;
  out.summary.min = std::numeric_limits<double>::infinity();
  out.summary.max = 0.0;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) > 0.0)) continue;
    const double w = weights(i) / total;
    out.mean += w * values(i);
    out.summary.sum += w;
    sq += w * w;
    out.summary.min = std::min(out.summary.min, w);
    out.summary.max = std::max(out.summary.max, w);
  }
  out.summary.ess = 1.0 / sq;
  out.summary.n = used;
  return out;
}

inline WeightSummary uniform_summary(Eigen::Index n) {
  const double w = 1.0 / static_cast<double>(n);
  return WeightSummary{w, w, static_cast<double>(n), static_cast<double>(n) * w, n};
}

/// Clamps to [eps, 1-eps]; counts changed entries.
inline Vector trim_scores(Vector v, double eps, Eigen::Index& changed) {
  if (eps <= 0.0) return v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double c = std::clamp(v(i), eps, 1.0 - eps);
    changed += c != v(i);
    v(i) = c;
  }
  return v;
}

inline void require_open_unit(const Vector& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0 && v(i) < 1.0)) {
      fail(ErrorKind::overlap, std::string(name) + " = " + csv::format_double(v(i)) +
                                   " at row " + std::to_string(i + 1) + " is outside (0,1)");
    }
  }
}

inline void require_trim(double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) fail(ErrorKind::invalid_argument, "trim must lie in [0, 0.5)");
}

}  // namespace detail

/// Hajek IPW contrast of `values` given treatment `w` and propensity `e`.
inline EstimateReport estimate_index_from_scores(const Vector& w, const Vector& e,
                                                 const Vector& values,
                                                 const EstimatorOptions& options = {}) {
  detail::require_trim(options.trim);
  detail::require_open_unit(e, "propensity score");
  EstimateReport report;
  report.method = Method::index;
  report.trim_epsilon = options.trim;
  const Vector et = detail::trim_scores(e, options.trim, report.n_trimmed);
  const Vector w1 = w.cwiseQuotient(et);
  const Vector w0 = (1.0 - w.array()).matrix().cwiseQuotient((1.0 - et.array()).matrix());
  const auto t1 = detail::hajek(values, w1, "treated");
  const auto t0 = detail::hajek(values, w0, "control");
  report.tau_hat = t1.mean - t0.mean;
  report.treated = t1.summary;
  report.control = t0.summary;
  report.n_treated = t1.summary.n;
  report.n_control = t0.summary.n;
  return report;
}

/// Surrogate index estimator: Hajek contrast of h_O(S,X) in the experimental sample.
inline EstimateReport estimate_index(const ExperimentalSample& exp, const NuisanceFits& fits,
                                     const EstimatorOptions& options = {}) {
  return estimate_index_from_scores(exp.w(), fits.e_hat(exp.x()), fits.h_hat(exp.s(), exp.x()),
                                    options);
}

/// Surrogate score estimator on per-row scores, with weights
///   w1 = r t (1-q) / (e (1-t) q),   w0 = (1-r) t (1-q) / ((1-e) (1-t) q).
inline EstimateReport estimate_score_from_scores(const Vector& y, const Vector& r, const Vector& e,
                                                 const Vector& t, double q,
                                                 const EstimatorOptions& options = {}) {
  detail::require_trim(options.trim);
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_argument, "q must lie in (0,1)");
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (!(t(i) < 1.0 - 1e-12)) {
      fail(ErrorKind::overlap, "sampling score " + csv::format_double(t(i)) + " at row " +
                                   std::to_string(i + 1) + " violates t < 1");
    }
  }
  detail::require_open_unit(e, "propensity score");
  EstimateReport report;
  report.method = Method::score;
  report.trim_epsilon = options.trim;
  const Vector rt = detail::trim_scores(r, options.trim, report.n_trimmed);
  const Vector et = detail::trim_scores(e, options.trim, report.n_trimmed);
  const Vector tt = detail::trim_scores(t, options.trim, report.n_trimmed);
  const Eigen::ArrayXd odds = tt.array() * (1.0 - q) / ((1.0 - tt.array()) * q);
  const Vector w1 = (rt.array() * odds / et.array()).matrix();
  const Vector w0 = ((1.0 - rt.array()) * odds / (1.0 - et.array())).matrix();
  const auto t1 = detail::hajek(y, w1, "treated");
  const auto t0 = detail::hajek(y, w0, "control");
  report.tau_hat = t1.mean - t0.mean;
  report.treated = t1.summary;
  report.control = t0.summary;
  report.n_treated = t1.summary.n;
  report.n_control = t0.summary.n;
  return report;
}

/// Surrogate score estimator: weighted contrast of Y in the observational sample.
inline EstimateReport estimate_score(const ObservationalSample& obs, const NuisanceFits& fits,
                                     double q, const EstimatorOptions& options = {}) {
  return estimate_score_from_scores(obs.y(), fits.r_hat(obs.s(), obs.x()), fits.e_hat(obs.x()),
                                    fits.t_hat(obs.s(), obs.x()), q, options);
}

/// Per-surrogate Hajek IPW contrast, same weights as estimate_index.
inline TauSurrogates estimate_tau_surrogates(const ExperimentalSample& exp,
                                             const NuisanceFits& fits,
                                             const EstimatorOptions& options = {}) {
  const Vector e = fits.e_hat(exp.x());
  TauSurrogates out{Vector(exp.n_surrogates())};
  for (Eigen::Index j = 0; j < exp.n_surrogates(); ++j) {
    out.tau_s(j) = estimate_index_from_scores(exp.w(), e, exp.s().col(j), options).tau_hat;
  }
  return out;
}

/// gamma_S' tau_S, valid when h_O is linear in (s, x) without interactions.
inline EstimateReport estimate_linear_shortcut(const ExperimentalSample& exp,
                                               const NuisanceFits& fits,
                                               const EstimatorOptions& options = {}) {
  if (fits.h.layout.interactions) {
    fail(ErrorKind::unsupported, "linear shortcut requires a surrogate index without interactions");
  }
  if (fits.h.coef_s.size() != exp.n_surrogates()) {
    fail(ErrorKind::invalid_argument, "surrogate index dimension does not match the sample");
  }
  const Vector e = fits.e_hat(exp.x());
  EstimateReport report = estimate_index_from_scores(exp.w(), e, exp.s().col(0), options);
  report.method = Method::linear_shortcut;
  report.tau_hat = fits.h.coef_s.dot(estimate_tau_surrogates(exp, fits, options).tau_s);
  return report;
}

struct MatchingOptions {
  /// Also impute for control units and average over the whole experimental sample.
  bool both_directions = false;
};

namespace detail {

inline Matrix standardize_with(const Matrix& z, const Vector& mean, const Vector& scale) {
  return ((z.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

inline std::pair<Vector, Vector> column_moments(const Matrix& pool) {
  const Vector mean = pool.colwise().mean();
  Vector scale(pool.cols());
  for (Eigen::Index j = 0; j < pool.cols(); ++j) {
    const double sd = std::sqrt((pool.col(j).array() - mean(j)).square().mean());
    scale(j) = sd > 0.0 ? sd : 1.0;
  }
  return {mean, scale};
}

/// Index in `candidates` of the row of `pool` closest to `query`; ties go to
/// the lowest candidate position.
inline Eigen::Index nearest(const Matrix& pool, const std::vector<Eigen::Index>& candidates,
                            const Eigen::RowVectorXd& query) {
  Eigen::Index best = candidates.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c : candidates) {
    const double d = (pool.row(c) - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Matching estimator. For each treated unit i: the nearest control j by
/// covariates, then the nearest observational units i', j' of i and j by
/// (s, x); the unit contrast is Y_i' - Y_j'. Distances are Euclidean on
/// standardized columns; matching is with replacement.
inline EstimateReport estimate_matching(const ExperimentalSample& exp,
                                        const ObservationalSample& obs,
                                        const MatchingOptions& options = {}) {
  if (exp.n_surrogates() != obs.n_surrogates() || exp.n_covariates() != obs.n_covariates()) {
    fail(ErrorKind::pooling, "experimental and observational dimensions differ");
  }
  const Eigen::Index ne = exp.size();
  const Eigen::Index no = obs.size();

  Matrix sx_exp(ne, exp.n_surrogates() + exp.n_covariates());
  sx_exp << exp.s(), exp.x();
  Matrix sx_obs(no, sx_exp.cols());
  sx_obs << obs.s(), obs.x();
  Matrix sx_pool(ne + no, sx_exp.cols());
  sx_pool << sx_exp, sx_obs;
  const auto [sx_mean, sx_scale] = detail::column_moments(sx_pool);
  const Matrix zs_exp = detail::standardize_with(sx_exp, sx_mean, sx_scale);
  const Matrix zs_obs = detail::standardize_with(sx_obs, sx_mean, sx_scale);
  const auto [x_mean, x_scale] = detail::column_moments(exp.x());
  const Matrix zx = detail::standardize_with(exp.x(), x_mean, x_scale);

  std::vector<Eigen::Index> treated, control, all_obs(static_cast<std::size_t>(no));
  for (Eigen::Index i = 0; i < ne; ++i) (exp.w()(i) == 1.0 ? treated : control).push_back(i);
  for (Eigen::Index i = 0; i < no; ++i) all_obs[static_cast<std::size_t>(i)] = i;
  if (treated.empty() || control.empty()) {
    fail(ErrorKind::degenerate_arm, "matching needs treated and control units");
  }

  std::vector<Eigen::Index> obs_match(static_cast<std::size_t>(ne));
  for (Eigen::Index i = 0; i < ne; ++i) {
    obs_match[static_cast<std::size_t>(i)] = detail::nearest(zs_obs, all_obs, zs_exp.row(i));
  }
  auto y_of = [&](Eigen::Index unit) { return obs.y()(obs_match[static_cast<std::size_t>(unit)]); };

  Vector reuse = Vector::Zero(ne);
  double total = 0.0;
  Eigen::Index units = 0;
  for (Eigen::Index i : treated) {
    const Eigen::Index j = detail::nearest(zx, control, zx.row(i));
    total += y_of(i) - y_of(j);
    reuse(j) += 1.0;
    ++units;
  }
  if (options.both_directions) {
    for (Eigen::Index j : control) {
      const Eigen::Index i = detail::nearest(zx, treated, zx.row(j));
      total += y_of(i) - y_of(j);
      reuse(i) += 1.0;
      ++units;
    }
  }

  EstimateReport report;
  report.method = Method::matching;
  report.tau_hat = total / static_cast<double>(units);
  report.trim_epsilon = 0.0;
  Vector w1 = Vector::Zero(ne), w0 = Vector::Zero(ne);
  for (Eigen::Index i : treated) w1(i) = 1.0 + (options.both_directions ? reuse(i) : 0.0);
  for (Eigen::Index j : control) w0(j) = reuse(j) + (options.both_directions ? 1.0 : 0.0);
  const Vector zero = Vector::Zero(ne);
  report.treated = detail::hajek(zero, w1, "treated").summary;
  report.control = detail::hajek(zero, w0, "control").summary;
  report.n_treated = static_cast<Eigen::Index>(treated.size());
  report.n_control = static_cast<Eigen::Index>(control.size());
  return report;
}

enum class SingleSampleMode { difference_in_means, surrogate_index };

/// Single-sample baselines: Y1bar - Y0bar, or the arm contrast of h(S,X)
/// fitted by least squares of Y on (S,X) over both arms.
inline EstimateReport estimate_single_sample(const SingleSample& sample, SingleSampleMode mode,
                                             double ridge = 0.0) {
  Vector values = sample.y();
  EstimateReport report;
  report.method = Method::single_sample_dim;
  if (mode == SingleSampleMode::surrogate_index) {
    const FeatureLayout layout{sample.n_surrogates(), sample.n_covariates(), false};
    const Matrix z = layout.expand(sample.s(), sample.x());
    const LinearModel h = fit_least_squares(z, sample.y(), ridge, layout);
    values = predict_indices(h, sample.s(), sample.x());
    report.method = Method::single_sample_index;
  }
  const Vector w1 = sample.w();
  const Vector w0 = (1.0 - sample.w().array()).matrix();
  const auto t1 = detail::hajek(values, w1, "treated");
  const auto t0 = detail::hajek(values, w0, "control");
  report.tau_hat = t1.mean - t0.mean;
  report.treated = t1.summary;
  report.control = t0.summary;
  report.n_treated = t1.summary.n;
  report.n_control = t0.summary.n;
  return report;
}

// ---------------------------------------------------------------------------
// Bootstrap

namespace detail {

inline std::vector<Eigen::Index> draw_rows(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pick(rng);
  return rows;
}

inline Matrix take(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline Vector take(const Vector& v, const std::vector<Eigen::Index>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
  return out;
}

}  // namespace detail

/// Nonparametric resample preserving the sample size. Throws a validation
/// error when a resample loses a treatment arm.
inline ExperimentalSample resample(const ExperimentalSample& d, std::mt19937_64& rng) {
  const auto rows = detail::draw_rows(d.size(), rng);
  return ExperimentalSample(detail::take(d.w(), rows), detail::take(d.s(), rows),
                            detail::take(d.x(), rows));
}

inline ObservationalSample resample(const ObservationalSample& d, std::mt19937_64& rng) {
  const auto rows = detail::draw_rows(d.size(), rng);
  return ObservationalSample(detail::take(d.y(), rows), detail::take(d.s(), rows),
                             detail::take(d.x(), rows));
}

inline SingleSample resample(const SingleSample& d, std::mt19937_64& rng) {
  const auto rows = detail::draw_rows(d.size(), rng);
  return SingleSample(detail::take(d.w(), rows), detail::take(d.y(), rows),
                      detail::take(d.s(), rows), detail::take(d.x(), rows));
}

/// Each sample is resampled independently (experimental first).
inline PooledDataset resample(const PooledDataset& d, std::mt19937_64& rng) {
  auto exp = resample(d.experimental(), rng);
  auto obs = resample(d.observational(), rng);
  return PooledDataset(std::move(exp), std::move(obs));
}

template <class A, class B>
std::pair<A, B> resample(const std::pair<A, B>& d, std::mt19937_64& rng) {
  auto first = resample(d.first, rng);
  auto second = resample(d.second, rng);
  return {std::move(first), std::move(second)};
}

struct BootstrapResult {
  double se = 0.0;
  int reps = 0;
  int failures = 0;
};

/// Bootstrap standard error: sample SD of `estimator` over `reps` resamples.
/// Replicate b uses an mt19937_64 seeded with derive_seed(seed, b), so the
/// result does not depend on `threads`. A replicate whose resample or estimate
/// throws a library error counts as a failure; more than 20% failures is an
/// error.
template <class Data, class Estimator>
BootstrapResult bootstrap(Estimator&& estimator, const Data& data, int reps, std::uint64_t seed,
                          std::size_t threads = default_thread_count()) {
  if (reps < 2) fail(ErrorKind::invalid_argument, "bootstrap needs at least 2 replicates");
  std::vector<double> values(static_cast<std::size_t>(reps),
                             std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    try {
      values[b] = estimator(resample(data, rng));
    } catch (const Error&) {
      values[b] = std::numeric_limits<double>::quiet_NaN();
    }
  });
  BootstrapResult out;
  out.reps = reps;
  double sum = 0.0;
  int ok = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++ok;
    }
  }
  out.failures = reps - ok;
  if (out.failures * 5 > reps || ok < 2) {
    fail(ErrorKind::unstable_bootstrap, std::to_string(out.failures) + " of " +
                                            std::to_string(reps) + " bootstrap replicates failed");
  }
  const double mean = sum / ok;
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  out.se = std::sqrt(ss / (ok - 1));
  return out;
}

template <class Data, class Estimator>
double bootstrap_se(Estimator&& estimator, const Data& data, int reps, std::uint64_t seed,
                    std::size_t threads = default_thread_count()) {
  return bootstrap(std::forward<Estimator>(estimator), data, reps, seed, threads).se;
}

}  // namespace surrogate
