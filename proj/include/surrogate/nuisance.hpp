#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "surrogate/data.hpp"
#include "surrogate/error.hpp"

namespace surrogate {

/// Column layout of a nuisance design: M surrogate columns, K covariate
/// columns and, optionally, all M*K products s_j * x_k (j outer, k inner).
struct FeatureLayout {
  Eigen::Index m = 0;
  Eigen::Index k = 0;
  bool interactions = false;

  Eigen::Index n_interactions() const noexcept { return interactions ? m * k : 0; }
  Eigen::Index width() const noexcept { return m + k + n_interactions(); }

  Matrix expand(const Matrix& s, const Matrix& x) const {
    if (s.cols() != m || x.cols() != k || s.rows() != x.rows()) {
      fail(ErrorKind::invalid_argument,
           "feature dimension mismatch: model expects M=" + std::to_string(m) + ", K=" +
               std::to_string(k) + ", got M=" + std::to_string(s.cols()) + ", K=" +
               std::to_string(x.cols()));
    }
    Matrix z(s.rows(), width());
    z.leftCols(m) = s;
    z.middleCols(m, k) = x;
    if (interactions) {
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index l = 0; l < k; ++l) {
          z.col(m + k + j * k + l) = s.col(j).cwiseProduct(x.col(l));
        }
      }
    }
    return z;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

/// h(s,x) = intercept + coef_s's + coef_x'x (+ coef_sx' (s ⊗ x)).
struct LinearModel {
  FeatureLayout layout;
  double intercept = 0.0;
  Vector coef_s;
  Vector coef_x;
  Vector coef_sx;
  double residual_variance = 0.0;
  double ridge = 0.0;

  Vector coefficients() const {
    Vector c(layout.width());
    c << coef_s, coef_x, coef_sx;
    return c;
  }
};

/// P(label = 1 | s, x) = expit(intercept + ...). A model with a fixed
/// probability (known propensity, constant sampling score) ignores its inputs.
struct LogisticModel {
  FeatureLayout layout;
  double intercept = 0.0;
  Vector coef_s;
  Vector coef_x;
  Vector coef_sx;
  bool converged = true;
  int iterations = 0;
  double gradient_norm = 0.0;
  double ridge = 0.0;
  std::optional<double> fixed_probability;

  Vector coefficients() const {
    Vector c(layout.width());
    c << coef_s, coef_x, coef_sx;
    return c;
  }

  static LogisticModel constant(double p, FeatureLayout layout) {
    if (!(p > 0.0 && p < 1.0)) {
      fail(ErrorKind::invalid_argument, "constant probability must lie in (0,1)");
    }
    LogisticModel model;
    model.layout = layout;
    model.intercept = std::log(p / (1.0 - p));
    model.coef_s = Vector::Zero(layout.m);
    model.coef_x = Vector::Zero(layout.k);
    model.coef_sx = Vector::Zero(layout.n_interactions());
    model.fixed_probability = p;
    return model;
  }
};

namespace detail {

inline double softplus(double eta) noexcept {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double expit_raw(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// |eta| <= 35 keeps expit strictly inside (0,1) in double precision.
inline constexpr double kEtaClamp = 35.0;

inline void split_coefficients(const Vector& beta, const FeatureLayout& layout, Vector& cs,
                               Vector& cx, Vector& csx) {
  cs = beta.head(layout.m);
  cx = beta.segment(layout.m, layout.k);
  csx = beta.tail(layout.n_interactions());
}

/// Column centering and scaling used internally by both fitters.
struct Standardizer {
  Vector mean;
  Vector scale;

  explicit Standardizer(const Matrix& z) : mean(z.colwise().mean()), scale(z.cols()) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double sd = std::sqrt((z.col(j).array() - mean(j)).square().mean());
      scale(j) = sd > 0.0 ? sd : 1.0;
    }
  }

  Matrix apply(const Matrix& z) const {
    return ((z.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
        .matrix();
  }
};

inline void require_finite_design(const Matrix& z, const Vector& y) {
  if (!z.allFinite() || !y.allFinite()) {
    fail(ErrorKind::validation, "design or target contains non-finite values");
  }
  if (z.rows() != y.size()) {
    fail(ErrorKind::invalid_argument, "design has " + std::to_string(z.rows()) +
                                          " rows but target has " + std::to_string(y.size()));
  }
}

}  // namespace detail

/// Least squares of `targets` on an intercept plus `features`, minimizing
/// ||residual||^2 + ridge * ||slopes||^2. `layout` tells how columns map onto
/// (s, x, s⊗x); by default every column is treated as a surrogate.
inline LinearModel fit_least_squares(const Matrix& features, const Vector& targets, double ridge,
                                     std::optional<FeatureLayout> layout = {}) {
  const FeatureLayout lay = layout ? *layout : FeatureLayout{features.cols(), 0, false};
  if (lay.width() != features.cols()) {
    fail(ErrorKind::invalid_argument, "feature layout does not match design width");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    fail(ErrorKind::invalid_argument, "ridge penalty must be finite and >= 0");
  }
  detail::require_finite_design(features, targets);
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols();
  if (n == 0) fail(ErrorKind::validation, "least squares needs at least one row");
  if (ridge == 0.0 && n < p + 1) {
    fail(ErrorKind::singular, "least squares has " + std::to_string(n) + " rows for " +
                                  std::to_string(p + 1) +
                                  " parameters; use a positive ridge penalty");
  }

  const detail::Standardizer st(features);
  const double y_mean = targets.mean();
  const Vector yc = targets.array() - y_mean;
  const Matrix z = st.apply(features);

  Vector b = Vector::Zero(p);
  if (p > 0) {
    Matrix a(ridge > 0.0 ? n + p : n, p);
    Vector rhs = Vector::Zero(a.rows());
    a.topRows(n) = z;
    rhs.head(n) = yc;
    if (ridge > 0.0) {
      a.bottomRows(p).setZero();
      for (Eigen::Index j = 0; j < p; ++j) a(n + j, j) = std::sqrt(ridge) / st.scale(j);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      fail(ErrorKind::singular,
           "least squares design is rank deficient; use a positive ridge penalty");
    }
    b = qr.solve(rhs);
  }

  LinearModel model;
  model.layout = lay;
  model.ridge = ridge;
  const Vector beta = b.cwiseQuotient(st.scale);
  detail::split_coefficients(beta, lay, model.coef_s, model.coef_x, model.coef_sx);
  model.intercept = y_mean - st.mean.dot(beta);
  const Vector resid = targets - features * beta - Vector::Constant(n, model.intercept);
  model.residual_variance = resid.squaredNorm() / static_cast<double>(n);
  return model;
}

struct LogisticOptions {
  double ridge = 0.0;
  double tolerance = 1e-8;
  int max_iterations = 100;
  double separation_threshold = 30.0;
};

/// Penalized logistic maximum likelihood by iteratively reweighted least
/// squares with step-halving. The objective is
///   sum_i [y_i eta_i - log(1 + exp(eta_i))] - ridge/2 * ||slopes||^2.
/// Iteration runs in standardized coordinates; convergence is declared when the
/// max-norm of the mean penalized gradient there drops below `tolerance`.
inline LogisticModel fit_logistic(const Matrix& features, const Vector& labels,
                                  const LogisticOptions& options = {},
                                  std::optional<FeatureLayout> layout = {}) {
  const FeatureLayout lay = layout ? *layout : FeatureLayout{features.cols(), 0, false};
  if (lay.width() != features.cols()) {
    fail(ErrorKind::invalid_argument, "feature layout does not match design width");
  }
  const double ridge = options.ridge;
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    fail(ErrorKind::invalid_argument, "ridge penalty must be finite and >= 0");
  }
  detail::require_finite_design(features, labels);
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols();
  double ones = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) {
      fail(ErrorKind::validation, "logistic labels must be 0 or 1 (row " + std::to_string(i + 1) + ")");
    }
    ones += labels(i);
  }
  if (ones == 0.0 || ones == static_cast<double>(n)) {
    fail(ErrorKind::degenerate_labels, "labels contain a single class; the model is not estimable");
  }

  const detail::Standardizer st(features);
  Matrix z(n, p + 1);
  z.col(0).setOnes();
  z.rightCols(p) = st.apply(features);

  Vector lambda(p + 1);
  lambda(0) = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) lambda(j + 1) = ridge / (st.scale(j) * st.scale(j));

  const double nd = static_cast<double>(n);
  auto objective = [&](const Vector& b) {
    const Vector eta = z * b;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += labels(i) * eta(i) - detail::softplus(eta(i));
    return ll - 0.5 * b.cwiseProduct(lambda).dot(b);
  };

  const double ybar = ones / nd;
  Vector b = Vector::Zero(p + 1);
  b(0) = std::log(ybar / (1.0 - ybar));
  double obj = objective(b);

  LogisticModel model;
  model.layout = lay;
  model.ridge = ridge;
  model.converged = false;

  Vector prob(n);
  Vector grad(p + 1);
  Matrix hess(p + 1, p + 1);
  int iter = 0;
  for (;; ++iter) {
    const Vector eta = z * b;
    for (Eigen::Index i = 0; i < n; ++i) prob(i) = detail::expit_raw(eta(i));
    grad = z.transpose() * (labels - prob) - lambda.cwiseProduct(b);
    model.gradient_norm = grad.cwiseAbs().maxCoeff() / nd;
    if (model.gradient_norm < options.tolerance) {
      model.converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;

    const Vector w = prob.array() * (1.0 - prob.array());
    const Matrix zw = z.array().colwise() * w.array().sqrt();
    hess.setZero();
    hess.selfadjointView<Eigen::Lower>().rankUpdate(zw.transpose());
    hess.diagonal() += lambda;
    Eigen::LDLT<Matrix> ldlt(hess);
    const Vector d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-13 * d.cwiseAbs().maxCoeff())) {
      fail(ErrorKind::singular,
           "logistic information matrix is singular; use a positive ridge penalty");
    }
    const Vector step = ldlt.solve(grad);

    double t = 1.0;
    Vector candidate = b + step;
    double cand_obj = objective(candidate);
    int halvings = 0;
    while (!(cand_obj >= obj) && halvings < 40) {
      t *= 0.5;
      candidate = b + t * step;
      cand_obj = objective(candidate);
      ++halvings;
    }
    if (!(cand_obj >= obj)) break;
    b = candidate;
    obj = cand_obj;

    if (ridge == 0.0 && b.tail(p).norm() > options.separation_threshold) {
      fail(ErrorKind::separation,
           "coefficients diverge (standardized norm > " +
               std::to_string(static_cast<int>(options.separation_threshold)) +
               "): the labels are (quasi-)separated; use a positive ridge penalty");
    }
  }
  model.iterations = iter;

  // A linear predictor that strictly separates the classes means no MLE exists,
  // even if the gradient vanished before the norm check fired.
  if (ridge == 0.0 && p > 0) {
    const Vector eta = z * b;
    double lo1 = std::numeric_limits<double>::infinity();
    double hi0 = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (labels(i) == 1.0) lo1 = std::min(lo1, eta(i));
      else hi0 = std::max(hi0, eta(i));
    }
    if (lo1 > hi0) {
      fail(ErrorKind::separation,
           "the labels are completely separated by the features; use a positive ridge penalty");
    }
  }

  const Vector beta = b.tail(p).cwiseQuotient(st.scale);
  detail::split_coefficients(beta, lay, model.coef_s, model.coef_x, model.coef_sx);
  model.intercept = b(0) - st.mean.dot(beta);
  return model;
}

/// Gradient of the penalized log-likelihood with respect to
/// (intercept, slopes) on the original feature scale.
inline Vector logistic_gradient(const Matrix& features, const Vector& labels, double intercept,
                                const Vector& slopes, double ridge = 0.0) {
  const Vector eta = (features * slopes).array() + intercept;
  const Vector resid = labels - eta.unaryExpr([](double e) { return detail::expit_raw(e); });
  Vector g(slopes.size() + 1);
  g(0) = resid.sum();
  g.tail(slopes.size()) = features.transpose() * resid - ridge * slopes;
  return g;
}

namespace detail {

inline void require_row_width(const FeatureLayout& layout, Eigen::Index got) {
  if (got != layout.m + layout.k) {
    fail(ErrorKind::invalid_argument, "row has " + std::to_string(got) +
                                          " entries, model expects " +
                                          std::to_string(layout.m + layout.k));
  }
}

template <class Model>
Vector linear_predictor(const Model& model, const Matrix& s, const Matrix& x) {
  const Matrix z = model.layout.expand(s, x);
  return (z * model.coefficients()).array() + model.intercept;
}

}  // namespace detail

/// Clamped logistic; always strictly inside (0,1).
inline double expit(double eta) noexcept {
  return detail::expit_raw(std::clamp(eta, -detail::kEtaClamp, detail::kEtaClamp));
}

/// Score for one raw row laid out as (s_1..s_M, x_1..x_K).
inline double predict_score(const LogisticModel& model, const Vector& row) {
  detail::require_row_width(model.layout, row.size());
  if (model.fixed_probability) return *model.fixed_probability;
  const Matrix s = row.head(model.layout.m).transpose();
  const Matrix x = row.tail(model.layout.k).transpose();
  return expit(detail::linear_predictor(model, s, x)(0));
}

inline double predict_index(const LinearModel& model, const Vector& row) {
  detail::require_row_width(model.layout, row.size());
  const Matrix s = row.head(model.layout.m).transpose();
  const Matrix x = row.tail(model.layout.k).transpose();
  return detail::linear_predictor(model, s, x)(0);
}

inline Vector predict_scores(const LogisticModel& model, const Matrix& s, const Matrix& x) {
  if (model.fixed_probability) {
    model.layout.expand(s, x);
    return Vector::Constant(s.rows(), *model.fixed_probability);
  }
  return detail::linear_predictor(model, s, x).unaryExpr([](double e) { return expit(e); });
}

inline Vector predict_indices(const LinearModel& model, const Matrix& s, const Matrix& x) {
  return detail::linear_predictor(model, s, x);
}

enum class PropensityMode { logistic, sample_mean, known };

struct NuisanceOptions {
  double ridge = 0.0;
  std::optional<double> ridge_e;
  std::optional<double> ridge_r;
  std::optional<double> ridge_t;
  std::optional<double> ridge_h;
  PropensityMode propensity = PropensityMode::logistic;
  double known_p = 0.5;
  bool constant_t = false;
  bool interactions = false;
  int max_iterations = 100;
};

/// e(x), r(s,x), t(s,x) and h_O(s,x), fitted jointly on a pooled dataset.
struct NuisanceFits {
  LogisticModel e;
  LogisticModel r;
  LogisticModel t;
  LinearModel h;
  double ridge = 0.0;

  Vector e_hat(const Matrix& x) const { return predict_scores(e, Matrix(x.rows(), 0), x); }
  Vector r_hat(const Matrix& s, const Matrix& x) const { return predict_scores(r, s, x); }
  Vector t_hat(const Matrix& s, const Matrix& x) const { return predict_scores(t, s, x); }
  Vector h_hat(const Matrix& s, const Matrix& x) const { return predict_indices(h, s, x); }
};

namespace detail {

template <class Fn>
auto tagged(const char* nuisance, Fn&& fn) {
  try {
    return fn();
  } catch (const NuisanceError&) {
    throw;
  } catch (const Error& err) {
    throw NuisanceError(nuisance, err);
  }
}

}  // namespace detail

/// Fits e on X (experimental), r on (S,X) with label W (experimental), t on
/// (S,X) with label P=E (pooled) and h_O by least squares of Y on (S,X)
/// (observational). Errors name the failing nuisance function.
inline NuisanceFits fit_all(const PooledDataset& pooled, const NuisanceOptions& options = {}) {
  const auto& exp = pooled.experimental();
  const auto& obs = pooled.observational();
  const FeatureLayout sx{pooled.n_surrogates(), pooled.n_covariates(), options.interactions};
  const FeatureLayout x_only{0, pooled.n_covariates(), false};
  auto logit_opts = [&](const std::optional<double>& r) {
    LogisticOptions o;
    o.ridge = r.value_or(options.ridge);
    o.max_iterations = options.max_iterations;
    return o;
  };

  NuisanceFits fits;
  fits.ridge = options.ridge;
  fits.e = detail::tagged("propensity", [&] {
    switch (options.propensity) {
      case PropensityMode::known:
        return LogisticModel::constant(options.known_p, x_only);
      case PropensityMode::sample_mean:
        return LogisticModel::constant(exp.w().mean(), x_only);
      case PropensityMode::logistic:
        break;
    }
    return fit_logistic(exp.x(), exp.w(), logit_opts(options.ridge_e), x_only);
  });
  fits.r = detail::tagged("surrogate_score", [&] {
    return fit_logistic(sx.expand(exp.s(), exp.x()), exp.w(), logit_opts(options.ridge_r), sx);
  });
  fits.t = detail::tagged("sampling_score", [&] {
    if (options.constant_t) return LogisticModel::constant(pooled.q(), sx);
    return fit_logistic(sx.expand(pooled.stacked_surrogates(), pooled.stacked_covariates()),
                        pooled.experimental_indicator(), logit_opts(options.ridge_t), sx);
  });
  fits.h = detail::tagged("surrogate_index", [&] {
    return fit_least_squares(sx.expand(obs.s(), obs.x()), obs.y(),
                             options.ridge_h.value_or(options.ridge), sx);
  });
  return fits;
}

}  // namespace surrogate
