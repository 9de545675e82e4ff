#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "surrogate/data.hpp"
#include "surrogate/error.hpp"
#include "surrogate/estimators.hpp"
#include "surrogate/nuisance.hpp"

namespace surrogate {

// ---------------------------------------------------------------------------
// Bias bounds

/// Bound on |tau - (estimated quantity)| given user bounds on the surrogacy
/// violation |mu_E(s,x,1) - mu_E(s,x,0)| <= delta_surrogacy and the
/// comparability violation |h_E - h_O| <= delta_comparability.
struct BiasBound {
  double surrogacy_multiplier = 0.0;      // mean of r(1-r) / (e(1-e))
  double comparability_multiplier = 0.0;  // mean of |r-e| / (e(1-e))
  double delta_surrogacy = 0.0;
  double delta_comparability = 0.0;
  double total_bound = 0.0;
};

inline BiasBound bias_bound_from_scores(const Vector& r, const Vector& e, double delta_s,
                                        double delta_c) {
  if (!(delta_s >= 0.0) || !(delta_c >= 0.0) || !std::isfinite(delta_s) ||
      !std::isfinite(delta_c)) {
    fail(ErrorKind::invalid_argument, "bias bounds delta_s and delta_c must be finite and >= 0");
  }
  if (r.size() != e.size() || r.size() == 0) {
    fail(ErrorKind::invalid_argument, "score vectors must be non-empty and of equal length");
  }
  detail::require_open_unit(e, "propensity score");
  BiasBound b;
  b.delta_surrogacy = delta_s;
  b.delta_comparability = delta_c;
  const Eigen::ArrayXd v = e.array() * (1.0 - e.array());
  b.surrogacy_multiplier = (r.array() * (1.0 - r.array()) / v).mean();
  b.comparability_multiplier = ((r - e).array().abs() / v).mean();
  b.total_bound = delta_s * b.surrogacy_multiplier + delta_c * b.comparability_multiplier;
  return b;
}

inline BiasBound bias_bound(const ExperimentalSample& exp, const NuisanceFits& fits,
                            double delta_s, double delta_c) {
  return bias_bound_from_scores(fits.r_hat(exp.s(), exp.x()), fits.e_hat(exp.x()), delta_s,
                                delta_c);
}

struct ScoreRange {
  double min = 0.0;
  double max = 0.0;
};

struct OverlapSummary {
  ScoreRange e_experimental;
  ScoreRange r_experimental;
  ScoreRange r_observational;
  ScoreRange t_observational;
};

inline OverlapSummary overlap_summary(const PooledDataset& pooled, const NuisanceFits& fits) {
  auto range = [](const Vector& v) { return ScoreRange{v.minCoeff(), v.maxCoeff()}; };
  const auto& exp = pooled.experimental();
  const auto& obs = pooled.observational();
  return OverlapSummary{range(fits.e_hat(exp.x())), range(fits.r_hat(exp.s(), exp.x())),
                        range(fits.r_hat(obs.s(), obs.x())), range(fits.t_hat(obs.s(), obs.x()))};
}

// ---------------------------------------------------------------------------
// Discrete populations

/// Finite-support population for the two-sample design. Covariate cells
/// k = 0..K-1, surrogate support points m = 0..M-1.
///   x_probs[k]              P_E(X = x_k)
///   propensity[k]           e(x_k)
///   s_given_xw[w][k][m]     P_E(S = s_m | X = x_k, W = w)
///   mu_e[w][k][m]           E_E[Y | S = s_m, X = x_k, W = w]
///   var_e[w][k][m]          V_E(Y | S = s_m, X = x_k, W = w)
///   h_obs[k][m]             h_O(s_m, x_k)
///   obs_joint[k][m]         P_O(X = x_k, S = s_m)
struct DiscretePopulation {
  using Table = std::vector<std::vector<double>>;

  std::vector<double> x_probs;
  std::vector<double> propensity;
  Table s_given_xw[2];
  Table mu_e[2];
  Table var_e[2];
  Table h_obs;
  Table obs_joint;

  std::size_t n_x() const noexcept { return x_probs.size(); }
  std::size_t n_s() const noexcept { return h_obs.empty() ? 0 : h_obs.front().size(); }

  /// Experimental joint P_E(X = x_k, S = s_m).
  double exp_joint(std::size_t k, std::size_t m) const {
    const double e = propensity[k];
    return x_probs[k] * (e * s_given_xw[1][k][m] + (1.0 - e) * s_given_xw[0][k][m]);
  }

  /// r(s_m, x_k); 0 where the cell has no experimental mass.
  double surrogate_score(std::size_t k, std::size_t m) const {
    const double e = propensity[k];
    const double a = e * s_given_xw[1][k][m];
    const double b = (1.0 - e) * s_given_xw[0][k][m];
    return a + b > 0.0 ? a / (a + b) : 0.0;
  }

  /// h_E(s_m, x_k) = E_E[Y | S, X].
  double h_exp(std::size_t k, std::size_t m) const {
    const double r = surrogate_score(k, m);
    return r * mu_e[1][k][m] + (1.0 - r) * mu_e[0][k][m];
  }

  /// t(s_m, x_k) for sampling fraction q.
  double sampling_score(std::size_t k, std::size_t m, double q) const {
    const double pe = exp_joint(k, m) * q;
    const double po = obs_joint[k][m] * (1.0 - q);
    return pe + po > 0.0 ? pe / (pe + po) : 0.0;
  }

  void validate() const {
    auto near_one = [](double s) { return std::abs(s - 1.0) < 1e-9; };
    auto fail_if = [](bool bad, const std::string& msg) {
      if (bad) fail(ErrorKind::validation, "discrete population: " + msg);
    };
    const std::size_t kx = n_x();
    const std::size_t ms = n_s();
    fail_if(kx == 0 || ms == 0, "empty support");
    fail_if(propensity.size() != kx || h_obs.size() != kx || obs_joint.size() != kx,
            "covariate dimension mismatch");
    double total = 0.0;
    double obs_total = 0.0;
    for (std::size_t k = 0; k < kx; ++k) {
      fail_if(x_probs[k] < 0.0, "negative covariate probability");
      total += x_probs[k];
      fail_if(!(propensity[k] > 0.0 && propensity[k] < 1.0), "propensity outside (0,1)");
      fail_if(h_obs[k].size() != ms || obs_joint[k].size() != ms, "surrogate dimension mismatch");
      for (int w = 0; w < 2; ++w) {
        fail_if(s_given_xw[w].size() != kx || mu_e[w].size() != kx || var_e[w].size() != kx,
                "covariate dimension mismatch");
        fail_if(s_given_xw[w][k].size() != ms || mu_e[w][k].size() != ms ||
                    var_e[w][k].size() != ms,
                "surrogate dimension mismatch");
        double s = 0.0;
        for (std::size_t m = 0; m < ms; ++m) {
          fail_if(s_given_xw[w][k][m] < 0.0, "negative surrogate probability");
          fail_if(var_e[w][k][m] < 0.0, "negative variance");
          s += s_given_xw[w][k][m];
        }
        fail_if(!near_one(s), "surrogate distribution does not sum to 1");
      }
      for (std::size_t m = 0; m < ms; ++m) {
        fail_if(obs_joint[k][m] < 0.0, "negative observational probability");
        obs_total += obs_joint[k][m];
      }
    }
    fail_if(!near_one(total), "covariate probabilities do not sum to 1");
    fail_if(!near_one(obs_total), "observational probabilities do not sum to 1");
  }
};

struct IdentificationReport {
  double tau = 0.0;
  double tau_e = 0.0;
  double tau_o = 0.0;
  double max_abs_gap = 0.0;
  bool overlap_ok = true;  // t < 1 wherever the experimental sample has mass
};

/// tau, tau^E and tau^O by exact summation. Populations that violate the
/// identifying assumptions are evaluated as well; the gap then shows it.
inline IdentificationReport verify_identification(const DiscretePopulation& pop, double q) {
  pop.validate();
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_argument, "q must lie in (0,1)");
  IdentificationReport rep;
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    const double e = pop.propensity[k];
    for (std::size_t m = 0; m < pop.n_s(); ++m) {
      const double p1 = pop.s_given_xw[1][k][m];
      const double p0 = pop.s_given_xw[0][k][m];
      const double h = pop.h_obs[k][m];
      rep.tau += pop.x_probs[k] * (p1 * pop.mu_e[1][k][m] - p0 * pop.mu_e[0][k][m]);
      // E_E[W h / e - (1-W) h / (1-e)]
      rep.tau_e += pop.x_probs[k] * (e * p1 * h / e - (1.0 - e) * p0 * h / (1.0 - e));
      // E_O[Y (r t (1-q) / (e (1-t) q) - (1-r) t (1-q) / ((1-e) (1-t) q))]
      const double po = pop.obs_joint[k][m];
      if (po <= 0.0) {
        if (pop.exp_joint(k, m) > 0.0) rep.overlap_ok = false;
        continue;
      }
      const double r = pop.surrogate_score(k, m);
      const double t = pop.sampling_score(k, m, q);
      const double odds = t * (1.0 - q) / ((1.0 - t) * q);
      rep.tau_o += po * h * (r * odds / e - (1.0 - r) * odds / (1.0 - e));
    }
  }
  rep.max_abs_gap = std::max({std::abs(rep.tau - rep.tau_e), std::abs(rep.tau - rep.tau_o),
                              std::abs(rep.tau_e - rep.tau_o)});
  return rep;
}

struct BiasIdentityReport {
  double lhs = 0.0;              // tau - E_E[h_O(S(1),X) - h_O(S(0),X)]
  double surrogacy_term = 0.0;
  double comparability_term = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

inline BiasIdentityReport verify_bias_identity(const DiscretePopulation& pop) {
  pop.validate();
  BiasIdentityReport rep;
  double tau = 0.0;
  double tau_m = 0.0;
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    const double e = pop.propensity[k];
    for (std::size_t m = 0; m < pop.n_s(); ++m) {
      const double p1 = pop.s_given_xw[1][k][m];
      const double p0 = pop.s_given_xw[0][k][m];
      tau += pop.x_probs[k] * (p1 * pop.mu_e[1][k][m] - p0 * pop.mu_e[0][k][m]);
      tau_m += pop.x_probs[k] * (p1 - p0) * pop.h_obs[k][m];
      const double f = pop.exp_joint(k, m);
      if (f <= 0.0) continue;
      const double r = pop.surrogate_score(k, m);
      const double v = e * (1.0 - e);
      rep.surrogacy_term += f * (pop.mu_e[1][k][m] - pop.mu_e[0][k][m]) * r * (1.0 - r) / v;
      rep.comparability_term += f * (pop.h_exp(k, m) - pop.h_obs[k][m]) * (r - e) / v;
    }
  }
  rep.lhs = tau - tau_m;
  rep.rhs = rep.surrogacy_term + rep.comparability_term;
  rep.gap = std::abs(rep.lhs - rep.rhs);
  return rep;
}

// ---------------------------------------------------------------------------
// Efficiency bounds

struct EfficiencyBounds {
  double v_no_surrogacy = 0.0;
  double v_surrogacy = 0.0;
  double gain = 0.0;
  std::optional<double> v_two_sample;
  std::map<std::string, double> components;
  std::string variance_mode;
  bool variance_fallback = false;
};

namespace detail {

/// Per-unit plug-ins shared by both single-sample bounds.
struct EfficiencyTerms {
  double sigma2 = 0.0;
  double r = 0.0;
  double e = 0.0;
  double h = 0.0;
  double mu1 = 0.0;
  double mu0 = 0.0;
};

/// Averages the single-sample bound integrands over `units` with probabilities `weight`.
/// V_ns uses the sigma^2 (r/e^2 + (1-r)/(1-e)^2) form, V_s the squared one;
/// every other term is shared.
inline EfficiencyBounds combine(const std::vector<EfficiencyTerms>& units,
                                const std::vector<double>& weight, double tau) {
  double sig_ns = 0.0, sig_s = 0.0, b1 = 0.0, b0 = 0.0, het = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    const double w = weight[i];
    const double e2 = u.e * u.e;
    const double c2 = (1.0 - u.e) * (1.0 - u.e);
    sig_ns += w * u.sigma2 * (u.r / e2 + (1.0 - u.r) / c2);
    sig_s += w * u.sigma2 * (u.r * u.r / e2 + (1.0 - u.r) * (1.0 - u.r) / c2);
    b1 += w * u.r / e2 * (u.h - u.mu1) * (u.h - u.mu1);
    b0 += w * (1.0 - u.r) / c2 * (u.h - u.mu0) * (u.h - u.mu0);
    het += w * (u.mu1 - u.mu0 - tau) * (u.mu1 - u.mu0 - tau);
  }
  EfficiencyBounds out;
  const double shared = b1 + b0 + het;
  out.v_no_surrogacy = sig_ns + shared;
  out.v_surrogacy = sig_s + shared;
  out.gain = sig_ns - sig_s;
  out.components = {{"conditional_variance_no_surrogacy", sig_ns},
                    {"conditional_variance_surrogacy", sig_s},
                    {"between_strata_treated", b1},
                    {"between_strata_control", b0},
                    {"covariate_heterogeneity", het}};
  return out;
}

}  // namespace detail

/// Population single-sample bounds for a population that satisfies surrogacy
/// (mu_e and var_e do not depend on w). V_ns is computed from the
/// (s, x)-representation; `v_no_surrogacy_direct` below gives the other one.
inline EfficiencyBounds efficiency_bounds_population(const DiscretePopulation& pop) {
  pop.validate();
  std::vector<detail::EfficiencyTerms> units;
  std::vector<double> weight;
  double tau = 0.0;
  std::vector<double> mu1(pop.n_x()), mu0(pop.n_x());
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    for (std::size_t m = 0; m < pop.n_s(); ++m) {
      mu1[k] += pop.s_given_xw[1][k][m] * pop.mu_e[1][k][m];
      mu0[k] += pop.s_given_xw[0][k][m] * pop.mu_e[0][k][m];
    }
    tau += pop.x_probs[k] * (mu1[k] - mu0[k]);
  }
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    for (std::size_t m = 0; m < pop.n_s(); ++m) {
      const double f = pop.exp_joint(k, m);
      if (f <= 0.0) continue;
      const double r = pop.surrogate_score(k, m);
      const double d = pop.mu_e[1][k][m] - pop.mu_e[0][k][m];
      const double sigma2 =
          r * pop.var_e[1][k][m] + (1.0 - r) * pop.var_e[0][k][m] + r * (1.0 - r) * d * d;
      units.push_back({sigma2, r, pop.propensity[k], pop.h_exp(k, m), mu1[k], mu0[k]});
      weight.push_back(f);
    }
  }
  auto out = detail::combine(units, weight, tau);
  out.variance_mode = "population";
  return out;
}

/// V_ns as E[sigma_1^2(X)/e(X) + sigma_0^2(X)/(1-e(X)) + (mu_1(X)-mu_0(X)-tau)^2].
inline double v_no_surrogacy_direct(const DiscretePopulation& pop) {
  pop.validate();
  double tau = 0.0;
  std::vector<double> mu[2] = {std::vector<double>(pop.n_x()), std::vector<double>(pop.n_x())};
  std::vector<double> var[2] = {std::vector<double>(pop.n_x()), std::vector<double>(pop.n_x())};
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    for (int w = 0; w < 2; ++w) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t m = 0; m < pop.n_s(); ++m) {
        const double p = pop.s_given_xw[w][k][m];
        const double mu_c = pop.mu_e[w][k][m];
        m1 += p * mu_c;
        m2 += p * (pop.var_e[w][k][m] + mu_c * mu_c);
      }
      mu[w][k] = m1;
      var[w][k] = m2 - m1 * m1;
    }
    tau += pop.x_probs[k] * (mu[1][k] - mu[0][k]);
  }
  double v = 0.0;
  for (std::size_t k = 0; k < pop.n_x(); ++k) {
    const double e = pop.propensity[k];
    const double d = mu[1][k] - mu[0][k] - tau;
    v += pop.x_probs[k] * (var[1][k] / e + var[0][k] / (1.0 - e) + d * d);
  }
  return v;
}

enum class VarianceMode { homoskedastic, per_stratum };

/// Plug-in single-sample bounds. r-hat, e-hat from the nuisance fitters,
/// h_E-hat by least squares of Y on (S,X) over both arms, mu_w-hat(x) by least
/// squares of Y on X within arm w, sigma^2 from the h_E residuals
/// (homoskedastic) or within-cell variances of the distinct (s,x) rows
/// (per_stratum). Cells of size 1 make the per-stratum variance inestimable;
/// the homoskedastic value is used instead and `variance_fallback` is set.
inline EfficiencyBounds efficiency_bounds_single_sample(const SingleSample& sample,
                                                        VarianceMode mode, double ridge = 0.0) {
  const Eigen::Index n = sample.size();
  const Eigen::Index m = sample.n_surrogates();
  const Eigen::Index k = sample.n_covariates();
  const FeatureLayout sx{m, k, false};
  const FeatureLayout x_only{0, k, false};
  const Matrix no_s(n, 0);

  Vector e;
  if (k == 0) {
    e = Vector::Constant(n, sample.w().mean());
  } else {
    LogisticOptions lo;
    lo.ridge = ridge;
    e = predict_scores(fit_logistic(sample.x(), sample.w(), lo, x_only), no_s, sample.x());
  }

  Vector mu[2];
  for (int w = 0; w < 2; ++w) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sample.w()(i) == static_cast<double>(w)) rows.push_back(i);
    }
    if (rows.empty()) fail(ErrorKind::degenerate_arm, "both treatment arms must be non-empty");
    const LinearModel fit = fit_least_squares(detail::take(sample.x(), rows),
                                              detail::take(sample.y(), rows), ridge, x_only);
    mu[w] = predict_indices(fit, no_s, sample.x());
  }

  const LinearModel h_fit = fit_least_squares(sx.expand(sample.s(), sample.x()), sample.y(), ridge, sx);
  Vector h = predict_indices(h_fit, sample.s(), sample.x());
  Vector sigma2 = Vector::Constant(n, h_fit.residual_variance);
  Vector r;

  EfficiencyBounds out_mode;
  if (mode == VarianceMode::homoskedastic) {
    LogisticOptions lo;
    lo.ridge = ridge;
    r = predict_scores(fit_logistic(sx.expand(sample.s(), sample.x()), sample.w(), lo, sx),
                       sample.s(), sample.x());
    out_mode.variance_mode = "homoskedastic";
  } else {
    // Group identical (s, x) rows.
    Matrix z(n, m + k);
    z << sample.s(), sample.x();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    auto row_less = [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        if (z(a, j) != z(b, j)) return z(a, j) < z(b, j);
      }
      return a < b;
    };
    std::sort(order.begin(), order.end(), row_less);
    r.resize(n);
    Vector cell_var(n);
    bool fallback = false;
    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t end = start + 1;
      while (end < order.size() && z.row(order[end]) == z.row(order[start])) ++end;
      const double cnt = static_cast<double>(end - start);
      double treated = 0.0, sum = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        treated += sample.w()(order[i]);
        sum += sample.y()(order[i]);
      }
      const double mean = sum / cnt;
      double ss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const double d = sample.y()(order[i]) - mean;
        ss += d * d;
      }
      if (end - start < 2) fallback = true;
      for (std::size_t i = start; i < end; ++i) {
        r(order[i]) = treated / cnt;
        h(order[i]) = mean;
        cell_var(order[i]) = end - start < 2 ? 0.0 : ss / (cnt - 1.0);
      }
      start = end;
    }
    out_mode.variance_fallback = fallback;
    out_mode.variance_mode = fallback ? "homoskedastic" : "per_stratum";
    if (!fallback) sigma2 = cell_var;
  }

  double tau = (mu[1] - mu[0]).mean();
  std::vector<detail::EfficiencyTerms> units(static_cast<std::size_t>(n));
  std::vector<double> weight(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    units[static_cast<std::size_t>(i)] = {sigma2(i), r(i), e(i), h(i), mu[1](i), mu[0](i)};
  }
  auto out = detail::combine(units, weight, tau);
  out.variance_mode = out_mode.variance_mode;
  out.variance_fallback = out_mode.variance_fallback;
  out.components["sigma2_mean"] = sigma2.mean();
  out.components["tau"] = tau;
  return out;
}

/// Homoskedastic, covariate-free gain
///   sum_j probs_j * 2 sigma^2 / (p(1-p)) * (p(1-p) - (r_j - p)^2).
inline double efficiency_gain_homoskedastic(double p, double sigma2, const std::vector<double>& r_values,
                                            const std::vector<double>& probs) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::invalid_argument, "p must lie in (0,1)");
  if (!(sigma2 >= 0.0)) fail(ErrorKind::invalid_argument, "sigma2 must be >= 0");
  if (r_values.size() != probs.size() || probs.empty()) {
    fail(ErrorKind::invalid_argument, "r_values and probs must be non-empty and of equal length");
  }
  double total = 0.0, gain = 0.0;
  const double v = p * (1.0 - p);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!(probs[j] >= 0.0)) fail(ErrorKind::invalid_argument, "probabilities must be >= 0");
    if (!(r_values[j] >= 0.0 && r_values[j] <= 1.0)) {
      fail(ErrorKind::invalid_argument, "r values must lie in [0,1]");
    }
    total += probs[j];
    gain += probs[j] * 2.0 * sigma2 / v * (v - (r_values[j] - p) * (r_values[j] - p));
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::invalid_argument, "probabilities must sum to 1");
  return gain;
}

/// Two-sample bound with constant sampling score q and no covariates, per unit
///   sigma^2/(1-q) * (r/p - (1-r)/(1-p))^2
///   + 1/q * (r/p^2 (mu(S) - mu_1)^2 + (1-r)/(1-p)^2 (mu(S) - mu_0)^2),
/// averaged over `weight`.
inline double two_sample_bound(const Vector& sigma2, const Vector& r, const Vector& mu, double p,
                               double mu1, double mu0, double q, const Vector& weight,
                               std::map<std::string, double>* components = nullptr) {
  if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_argument, "q must lie in (0,1)");
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::invalid_argument, "p must lie in (0,1)");
  double first = 0.0, between = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double a = r(i) / p - (1.0 - r(i)) / (1.0 - p);
    first += weight(i) * sigma2(i) * a * a;
    between += weight(i) * (r(i) / (p * p) * (mu(i) - mu1) * (mu(i) - mu1) +
                            (1.0 - r(i)) / ((1.0 - p) * (1.0 - p)) * (mu(i) - mu0) * (mu(i) - mu0));
  }
  if (components) {
    (*components)["observational_variance"] = first / (1.0 - q);
    (*components)["between_strata"] = between / q;
  }
  return first / (1.0 - q) + between / q;
}

inline EfficiencyBounds efficiency_bound_two_sample(const PooledDataset& pooled,
                                                    const NuisanceFits& fits) {
  if (pooled.n_covariates() > 0) {
    fail(ErrorKind::unsupported,
         "the two-sample efficiency bound is only available without covariates (K = 0)");
  }
  if (!fits.t.fixed_probability) {
    fail(ErrorKind::unsupported,
         "the two-sample efficiency bound requires a constant sampling score (t = q)");
  }
  const auto& exp = pooled.experimental();
  const double q = pooled.q();
  const double p = exp.w().mean();
  const Vector e = fits.e_hat(exp.x());
  const Vector h_exp = fits.h_hat(exp.s(), exp.x());
  const Vector w1 = exp.w().cwiseQuotient(e);
  const Vector w0 = (1.0 - exp.w().array()).matrix().cwiseQuotient((1.0 - e.array()).matrix());
  const double mu1 = detail::hajek(h_exp, w1, "treated").mean;
  const double mu0 = detail::hajek(h_exp, w0, "control").mean;

  const Matrix s = pooled.stacked_surrogates();
  const Matrix x = pooled.stacked_covariates();
  const Vector r = fits.r_hat(s, x);
  const Vector mu = fits.h_hat(s, x);
  const Vector sigma2 = Vector::Constant(s.rows(), fits.h.residual_variance);
  const Vector weight = Vector::Constant(s.rows(), 1.0 / static_cast<double>(s.rows()));

  EfficiencyBounds out;
  out.variance_mode = "homoskedastic";
  out.v_two_sample = two_sample_bound(sigma2, r, mu, p, mu1, mu0, q, weight, &out.components);
  out.components["p"] = p;
  out.components["q"] = q;
  out.components["mu1"] = mu1;
  out.components["mu0"] = mu0;
  out.components["sigma2"] = fits.h.residual_variance;
  return out;
}

}  // namespace surrogate
