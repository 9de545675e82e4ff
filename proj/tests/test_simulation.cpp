#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "surrogate/surrogate.hpp"

using namespace surrogate;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::study;
}

DgpSpec simple_spec(Vector alpha, Vector gamma, Eigen::Index n = 500) {
  DgpSpec spec;
  spec.m_surrogates = alpha.size();
  spec.alpha = std::move(alpha);
  spec.gamma = std::move(gamma);
  spec.n_exp = n;
  spec.n_obs = n;
  return spec;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// tau for M = 1, alpha = a, gamma = g, zero intercepts, by Simpson's rule.
double simpson_tau(double a, double g) {
  const double p = oracle::normal_expectation([&](double z) { return oracle::expit(a * z); });
  const double hp = oracle::normal_expectation(
      [&](double z) { return oracle::expit(a * z) * oracle::expit(g * z); });
  const double h = oracle::normal_expectation([&](double z) { return oracle::expit(g * z); });
  return hp / p - (h - hp) / (1 - p);
}

}  // namespace

TEST(Draw, IsDeterministicPerSeed) {
  const DgpSpec spec = make_spec(Study::dimension, 10);
  const auto a = draw_dataset(spec, 42);
  const auto b = draw_dataset(spec, 42);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_FALSE(draw_dataset(spec, 43).first == a.first);
}

TEST(Draw, NullCoefficientsGiveFairCoins) {
  const auto [e, o] = draw_dataset(simple_spec(Vector::Zero(2), Vector::Zero(2), 100000), 1);
  const double se = 0.5 / std::sqrt(100000.0);
  EXPECT_NEAR(e.w().mean(), 0.5, 4 * se);
  EXPECT_NEAR(o.y().mean(), 0.5, 4 * se);
  EXPECT_NEAR(e.s().mean(), 0.0, 4.0 / std::sqrt(200000.0));
}

// Joint moments of (S, W) and (S, Y) at M = 1 against one-dimensional quadrature.
TEST(Draw, MomentsMatchQuadratureOracle) {
  const Eigen::Index n = 1000000;
  const auto [e, o] = draw_dataset(simple_spec(vec({1.0}), vec({1.0}), n), 7);
  const double p = oracle::normal_expectation([](double z) { return oracle::expit(z); });
  const double sp = oracle::normal_expectation([](double z) { return z * oracle::expit(z); });
  const double nd = static_cast<double>(n);
  EXPECT_NEAR(e.w().mean(), p, 3 * std::sqrt(p * (1 - p) / nd));
  EXPECT_NEAR(o.y().mean(), p, 3 * std::sqrt(p * (1 - p) / nd));
  const Vector sw = e.s().col(0).cwiseProduct(e.w());
  const Vector sy = o.s().col(0).cwiseProduct(o.y());
  const double sw_sd = std::sqrt((sw.array() - sw.mean()).square().mean());
  const double sy_sd = std::sqrt((sy.array() - sy.mean()).square().mean());
  EXPECT_NEAR(sw.mean(), sp, 3 * sw_sd / std::sqrt(nd));
  EXPECT_NEAR(sy.mean(), sp, 3 * sy_sd / std::sqrt(nd));
}

TEST(TrueTau, NullOutcomeModel) {
  EXPECT_EQ(true_tau(simple_spec(vec({1.0, 2.0}), Vector::Zero(2))), 0.0);
}

TEST(TrueTau, MatchesSimpsonOracle) {
  for (auto [a, g] : {std::pair{1.0, 1.0}, {0.5, 2.0}, {3.0, -1.0}, {10.0, 10.0}}) {
    EXPECT_NEAR(true_tau(simple_spec(vec({a}), vec({g}))), simpson_tau(a, g), 1e-9) << a << " " << g;
  }
}

TEST(TrueTau, MatchesMonteCarloWithinThreeSe) {
  const DgpSpec parallel = simple_spec(vec({1.0}), vec({1.0}));
  const auto mc = true_tau_monte_carlo(parallel, 10000000, 5);
  EXPECT_NEAR(true_tau(parallel), mc.value, 3 * mc.se);

  const DgpSpec oblique = simple_spec(vec({0.8, -0.3, 0.5}), vec({0.2, 0.9, -0.6}));
  const auto mc2 = true_tau_monte_carlo(oblique, 2000000, 6);
  EXPECT_NEAR(true_tau(oblique), mc2.value, 3 * mc2.se);
}

TEST(TrueTau, InvariantToJointPermutation) {
  const DgpSpec a = simple_spec(vec({0.8, -0.3, 0.5}), vec({0.2, 0.9, -0.6}));
  const DgpSpec b = simple_spec(vec({0.5, 0.8, -0.3}), vec({-0.6, 0.2, 0.9}));
  EXPECT_NEAR(true_tau(a), true_tau(b), 1e-12);
}

TEST(Calibrate, TargetsAndErrors) {
  const Vector dir = vec({1.0, 2.0, -0.5});
  EXPECT_EQ(calibrate_tau(0.0, dir).scale, 0.0);
  const Calibration c = calibrate_tau(0.5, dir);
  const Vector coef = c.scale * dir / dir.norm();
  EXPECT_NEAR(true_tau(simple_spec(coef, coef)), 0.5, 1e-3);
  EXPECT_EQ(kind_of([&] { calibrate_tau(-0.2, dir); }), ErrorKind::unattainable);
  EXPECT_EQ(kind_of([&] { calibrate_tau(1.0, dir); }), ErrorKind::unattainable);
  try {
    const Calibration hi = calibrate_tau(0.999, dir);
    EXPECT_NEAR(hi.achieved_tau, 0.999, 1e-3);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unattainable);
    EXPECT_NE(std::string(e.what()).find("reachable range"), std::string::npos);
  }
}

TEST(Calibrate, EffectIsMonotoneInScale) {
  double prev = -1.0;
  for (double c : {0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0}) {
    const double t = true_tau(simple_spec(vec({c}), vec({c})));
    EXPECT_GT(t, prev);
    prev = t;
  }
}

TEST(Specs, StudyDesigns) {
  const DgpSpec d = make_spec(Study::dimension, 200);
  EXPECT_EQ(d.m_surrogates, 200);
  EXPECT_EQ(d.n_exp, 500);
  EXPECT_EQ(d.n_obs, 500);
  EXPECT_EQ(d.alpha, d.gamma);
  // Coefficients are prefixes of one fixed draw, rescaled by 1/sqrt(M).
  const DgpSpec d10 = make_spec(Study::dimension, 10);
  EXPECT_NEAR((d10.alpha * std::sqrt(10.0) - d.alpha.head(10) * std::sqrt(200.0)).norm(), 0.0, 1e-12);

  const DgpSpec m = make_spec(Study::misspecification, 10);
  EXPECT_EQ(m.m_surrogates, 250);
  EXPECT_EQ(m.analyst_columns(), 10);
  EXPECT_DOUBLE_EQ(m.alpha(3), (1.0 / 3.0) / 2.0);

  const DgpSpec s = make_spec(Study::sample_size, 0.05);
  EXPECT_EQ(s.n_exp, 50);
  EXPECT_EQ(s.n_obs, 950);
  EXPECT_EQ(s.m_surrogates, 10);
  EXPECT_NEAR(true_tau(s), 0.5, 1e-3);
  EXPECT_EQ(make_spec(Study::sample_size, 0.95).alpha, s.alpha);

  const DgpSpec e1 = make_spec(Study::explanatory, 1), e4 = make_spec(Study::explanatory, 4);
  EXPECT_NEAR((e4.alpha - 2.0 * e1.alpha).norm(), 0.0, 1e-12);
  EXPECT_NEAR((e4.gamma - 2.0 * e1.gamma).norm(), 0.0, 1e-12);
  EXPECT_EQ(make_spec(Study::explanatory, 2).gamma, e1.gamma);

  EXPECT_EQ(kind_of([] { make_spec(Study::dimension, 201); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { make_spec(Study::misspecification, 2.5); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { make_spec(Study::sample_size, 1.0); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([] { parse_study("bogus"); }), ErrorKind::invalid_argument);
  EXPECT_EQ(parse_study("samplesize"), Study::sample_size);
}

TEST(MonteCarlo, DeterministicAndThreadIndependent) {
  const DgpSpec spec = make_spec(Study::explanatory, 1);
  const McResult a = run_monte_carlo(spec, 20, 3, 1);
  const McResult b = run_monte_carlo(spec, 20, 3, 8);
  EXPECT_EQ(a.score.mean_estimate, b.score.mean_estimate);
  EXPECT_EQ(a.index.sd, b.index.sd);
  EXPECT_EQ(json(a).dump(), json(b).dump());
  const McResult c = run_monte_carlo(spec, 2, 9, 2);
  EXPECT_EQ(json(c).dump(), json(run_monte_carlo(spec, 2, 9, 1)).dump());
}

TEST(MonteCarlo, ReplicationMatchesDirectComputation) {
  const DgpSpec spec = make_spec(Study::misspecification, 5);
  const auto [e, o] = draw_dataset(spec, derive_seed(4, 0));
  const auto rep = run_replication(spec, derive_seed(4, 0));
  const Matrix se = e.s().leftCols(5), so = o.s().leftCols(5);
  const LinearModel h = fit_least_squares(so, o.y(), 0.0);
  const Vector he = predict_indices(h, se, Matrix(se.rows(), 0));
  double m1 = 0, m0 = 0;
  for (Eigen::Index i = 0; i < he.size(); ++i) (e.w()(i) ? m1 : m0) += he(i);
  EXPECT_NEAR(rep.index, m1 / e.n_treated() - m0 / e.n_control(), 1e-12);

  const LogisticModel r = fit_logistic(se, e.w());
  const Vector rh = predict_scores(r, so, Matrix(so.rows(), 0));
  double a1 = 0, b1 = 0, a0 = 0, b0 = 0;
  for (Eigen::Index i = 0; i < rh.size(); ++i) {
    a1 += rh(i) * o.y()(i);
    b1 += rh(i);
    a0 += (1 - rh(i)) * o.y()(i);
    b0 += 1 - rh(i);
  }
  EXPECT_NEAR(rep.score, a1 / b1 - a0 / b0, 1e-12);
}

TEST(MonteCarlo, NullCalibration) {
  const int reps = 200;
  const McResult r = run_monte_carlo(simple_spec(Vector::Zero(3), Vector::Zero(3)), reps, 11);
  EXPECT_EQ(r.true_tau, 0.0);
  EXPECT_LT(r.score.abs_bias, 4 * r.score.sd / std::sqrt(reps));
  EXPECT_LT(r.index.abs_bias, 4 * r.index.sd / std::sqrt(reps));
  EXPECT_EQ(r.score.reps, r.score.successes + r.score.failures);
}

TEST(Study, CsvLayout) {
  const auto rows = run_study(Study::sample_size, {0.25, 0.5}, 3, 1, 2);
  std::ostringstream out;
  write_study_csv(out, rows);
  std::istringstream in(out.str());
  const csv::Table t = csv::read(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"grid_value", "estimator", "abs_bias_x100", "sd_x100",
                                                "reps", "failures", "true_tau"}));
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows[0][1], "score");
  EXPECT_EQ(t.rows[1][1], "index");
  EXPECT_EQ(t.rows[3][0], "0.5");
  EXPECT_EQ(t.rows[3][4], "3");
}
