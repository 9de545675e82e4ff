#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's numerical code; inputs and outputs are plain std::vector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "surrogate/diagnostics.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Solves A x = b by Gaussian elimination with partial pivoting.
inline Vec gauss_solve(Mat a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

/// OLS with intercept via the normal equations; returns (intercept, slopes...).
inline Vec normal_equations(const Mat& x, const Vec& y) {
  const std::size_t n = y.size();
  const std::size_t p = x.empty() ? 0 : x[0].size();
  Mat a(p + 1, Vec(p + 1, 0.0));
  Vec b(p + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec row{1.0};
    row.insert(row.end(), x[i].begin(), x[i].end());
    for (std::size_t r = 0; r <= p; ++r) {
      b[r] += row[r] * y[i];
      for (std::size_t c = 0; c <= p; ++c) a[r][c] += row[r] * row[c];
    }
  }
  return gauss_solve(a, b);
}

/// Bernoulli log-likelihood of (intercept, slopes).
inline double loglik(const Mat& x, const Vec& y, const Vec& beta) {
  double ll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double eta = beta[0];
    for (std::size_t j = 0; j < x[i].size(); ++j) eta += beta[j + 1] * x[i][j];
    const double p = expit(eta);
    ll += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return ll;
}

/// Central finite-difference gradient of loglik.
inline Vec fd_gradient(const Mat& x, const Vec& y, const Vec& beta, double h = 1e-5) {
  Vec g(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) {
    Vec up = beta, dn = beta;
    up[j] += h;
    dn[j] -= h;
    g[j] = (loglik(x, y, up) - loglik(x, y, dn)) / (2.0 * h);
  }
  return g;
}

/// Two-parameter MLE by a grid search over [-lim, lim]^2 followed by a
/// shrinking compass search on the exact log-likelihood.
inline std::pair<double, double> grid_mle(const Vec& s, const Vec& y, double lim = 4.0) {
  Mat x;
  for (double v : s) x.push_back({v});
  double best_a = 0.0, best_b = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (double a = -lim; a <= lim + 1e-12; a += 0.01) {
    for (double b = -lim; b <= lim + 1e-12; b += 0.01) {
      const double ll = loglik(x, y, {a, b});
      if (ll > best) {
        best = ll;
        best_a = a;
        best_b = b;
      }
    }
  }
  for (double step = 0.01; step > 1e-9; step *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (auto [da, db] : {std::pair{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}) {
        const double ll = loglik(x, y, {best_a + da * step, best_b + db * step});
        if (ll > best) {
          best = ll;
          best_a += da * step;
          best_b += db * step;
          moved = true;
        }
      }
    }
  }
  return {best_a, best_b};
}

/// Hajek IPW contrast computed by hand.
inline double hajek_contrast(const Vec& w, const Vec& e, const Vec& v) {
  double n1 = 0, d1 = 0, n0 = 0, d0 = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    n1 += w[i] / e[i] * v[i];
    d1 += w[i] / e[i];
    n0 += (1 - w[i]) / (1 - e[i]) * v[i];
    d0 += (1 - w[i]) / (1 - e[i]);
  }
  return n1 / d1 - n0 / d0;
}

/// Surrogate-score contrast written out term by term.
inline double score_contrast(const Vec& y, const Vec& r, const Vec& e, const Vec& t, double q) {
  double n1 = 0, d1 = 0, n0 = 0, d0 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w1 = r[i] * t[i] * (1 - q) / (e[i] * (1 - t[i]) * q);
    const double w0 = (1 - r[i]) * t[i] * (1 - q) / ((1 - e[i]) * (1 - t[i]) * q);
    n1 += w1 * y[i];
    d1 += w1;
    n0 += w0 * y[i];
    d0 += w0;
  }
  return n1 / d1 - n0 / d0;
}

/// Matching estimator by brute force over all pairs. Rows of `exp_z` and
/// `obs_z` are (s, x); `k` trailing columns are covariates.
inline double matching(const Vec& w, const Mat& exp_z, const Mat& obs_z, const Vec& y,
                       std::size_t k, bool both_directions) {
  const std::size_t d = exp_z[0].size();
  auto moments = [](const Mat& rows, std::size_t from, std::size_t to) {
    Vec mean(to - from, 0.0), sd(to - from, 0.0);
    for (const auto& r : rows) {
      for (std::size_t j = from; j < to; ++j) mean[j - from] += r[j] / rows.size();
    }
    for (const auto& r : rows) {
      for (std::size_t j = from; j < to; ++j) {
        sd[j - from] += (r[j] - mean[j - from]) * (r[j] - mean[j - from]) / rows.size();
      }
    }
    for (auto& v : sd) v = v > 0 ? std::sqrt(v) : 1.0;
    return std::pair{mean, sd};
  };
  Mat all = exp_z;
  all.insert(all.end(), obs_z.begin(), obs_z.end());
  const auto [m_all, s_all] = moments(all, 0, d);
  const auto [m_x, s_x] = moments(exp_z, d - k, d);
  auto dist_all = [&](const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = (a[j] - m_all[j]) / s_all[j] - (b[j] - m_all[j]) / s_all[j];
      s += u * u;
    }
    return s;
  };
  auto dist_x = [&](const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t j = d - k; j < d; ++j) {
      const double u = (a[j] - m_x[j - d + k]) / s_x[j - d + k] - (b[j] - m_x[j - d + k]) / s_x[j - d + k];
      s += u * u;
    }
    return s;
  };
  auto obs_y = [&](std::size_t unit) {
    std::size_t best = 0;
    for (std::size_t o = 1; o < obs_z.size(); ++o) {
      if (dist_all(exp_z[unit], obs_z[o]) < dist_all(exp_z[unit], obs_z[best])) best = o;
    }
    return y[best];
  };
  auto partner = [&](std::size_t unit, double arm) {
    std::size_t best = exp_z.size();
    for (std::size_t j = 0; j < exp_z.size(); ++j) {
      if (w[j] != arm) continue;
      if (best == exp_z.size() || dist_x(exp_z[unit], exp_z[j]) < dist_x(exp_z[unit], exp_z[best])) {
        best = j;
      }
    }
    return best;
  };
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 1) {
      total += obs_y(i) - obs_y(partner(i, 0));
      ++count;
    } else if (both_directions) {
      total += obs_y(partner(i, 1)) - obs_y(i);
      ++count;
    }
  }
  return total / count;
}

/// Exact SD of f over the bootstrap distribution of two independent samples,
/// enumerating every ordered resample of each.
inline double bootstrap_sd_exact(const Vec& a, const Vec& b, const std::function<double(const Vec&, const Vec&)>& f) {
  auto all_draws = [](const Vec& v) {
    std::vector<Vec> out;
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      Vec d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = v[idx[i]];
      out.push_back(d);
      std::size_t pos = 0;
      while (pos < n && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == n) break;
    }
    return out;
  };
  const auto da = all_draws(a), db = all_draws(b);
  double s = 0, ss = 0, n = 0;
  for (const auto& x : da) {
    for (const auto& y : db) {
      const double v = f(x, y);
      s += v;
      ss += v * v;
      n += 1;
    }
  }
  const double mean = s / n;
  return std::sqrt(ss / n - mean * mean);
}

/// Random finite population. Compliant populations satisfy surrogacy
/// (outcome law given (s,x) free of w) and comparability (h_O = h_E).
inline surrogate::DiscretePopulation random_population(std::mt19937_64& rng, std::size_t kx,
                                                       std::size_t ms, bool compliant) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_real_distribution<double> prop(0.1, 0.9);
  std::normal_distribution<double> z(0.0, 1.0);
  auto simplex = [&](std::size_t n) {
    Vec v(n);
    double s = 0;
    for (auto& x : v) s += (x = u(rng));
    for (auto& x : v) x /= s;
    return v;
  };
  surrogate::DiscretePopulation pop;
  pop.x_probs = simplex(kx);
  for (std::size_t k = 0; k < kx; ++k) pop.propensity.push_back(prop(rng));
  for (int w = 0; w < 2; ++w) {
    pop.s_given_xw[w].resize(kx);
    pop.mu_e[w].assign(kx, Vec(ms));
    pop.var_e[w].assign(kx, Vec(ms));
    for (std::size_t k = 0; k < kx; ++k) pop.s_given_xw[w][k] = simplex(ms);
  }
  pop.h_obs.assign(kx, Vec(ms));
  const Vec joint = simplex(kx * ms);
  pop.obs_joint.assign(kx, Vec(ms));
  for (std::size_t k = 0; k < kx; ++k) {
    for (std::size_t m = 0; m < ms; ++m) {
      pop.obs_joint[k][m] = joint[k * ms + m];
      const double mu = z(rng), var = u(rng);
      for (int w = 0; w < 2; ++w) {
        pop.mu_e[w][k][m] = compliant ? mu : z(rng);
        pop.var_e[w][k][m] = compliant ? var : u(rng);
      }
      pop.h_obs[k][m] = compliant ? mu : z(rng);
    }
  }
  return pop;
}

/// E[f(Z)] for Z ~ N(0,1) by composite Simpson on [-12, 12].
inline double normal_expectation(const std::function<double(double)>& f, int panels = 20000) {
  const double a = -12.0, b = 12.0, h = (b - a) / panels;
  auto g = [&](double z) { return f(z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
  double s = g(a) + g(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * g(a + i * h);
  return s * h / 3.0;
}

}  // namespace oracle
