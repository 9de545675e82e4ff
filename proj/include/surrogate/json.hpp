#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "surrogate/diagnostics.hpp"
#include "surrogate/estimators.hpp"
#include "surrogate/nuisance.hpp"
#include "surrogate/simulation.hpp"

// JSON forms of the library's result types (nlohmann::json ADL hooks).

namespace surrogate {

using json = nlohmann::json;

namespace detail {

inline json to_array(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector from_array(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline void to_json(json& j, const FeatureLayout& l) {
  j = json{{"m", l.m}, {"k", l.k}, {"interactions", l.interactions}};
}

inline void from_json(const json& j, FeatureLayout& l) {
  l.m = j.at("m").get<Eigen::Index>();
  l.k = j.at("k").get<Eigen::Index>();
  l.interactions = j.at("interactions").get<bool>();
}

inline void to_json(json& j, const LinearModel& m) {
  j = json{{"layout", m.layout},
           {"intercept", m.intercept},
           {"coef_s", detail::to_array(m.coef_s)},
           {"coef_x", detail::to_array(m.coef_x)},
           {"coef_sx", detail::to_array(m.coef_sx)},
           {"residual_variance", m.residual_variance},
           {"ridge", m.ridge}};
}

inline void from_json(const json& j, LinearModel& m) {
  m.layout = j.at("layout").get<FeatureLayout>();
  m.intercept = j.at("intercept").get<double>();
  m.coef_s = detail::from_array(j.at("coef_s"));
  m.coef_x = detail::from_array(j.at("coef_x"));
  m.coef_sx = detail::from_array(j.at("coef_sx"));
  m.residual_variance = j.at("residual_variance").get<double>();
  m.ridge = j.at("ridge").get<double>();
  if (m.coef_s.size() != m.layout.m || m.coef_x.size() != m.layout.k ||
      m.coef_sx.size() != m.layout.n_interactions()) {
    fail(ErrorKind::schema, "linear model coefficients do not match its layout");
  }
}

inline void to_json(json& j, const LogisticModel& m) {
  j = json{{"layout", m.layout},
           {"intercept", m.intercept},
           {"coef_s", detail::to_array(m.coef_s)},
           {"coef_x", detail::to_array(m.coef_x)},
           {"coef_sx", detail::to_array(m.coef_sx)},
           {"converged", m.converged},
           {"iterations", m.iterations},
           {"gradient_norm", m.gradient_norm},
           {"ridge", m.ridge},
           {"fixed_probability", m.fixed_probability ? json(*m.fixed_probability) : json(nullptr)}};
}

inline void from_json(const json& j, LogisticModel& m) {
  m.layout = j.at("layout").get<FeatureLayout>();
  m.intercept = j.at("intercept").get<double>();
  m.coef_s = detail::from_array(j.at("coef_s"));
  m.coef_x = detail::from_array(j.at("coef_x"));
  m.coef_sx = detail::from_array(j.at("coef_sx"));
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  m.gradient_norm = j.at("gradient_norm").get<double>();
  m.ridge = j.at("ridge").get<double>();
  const auto& fp = j.at("fixed_probability");
  m.fixed_probability = fp.is_null() ? std::nullopt : std::optional<double>(fp.get<double>());
  if (m.coef_s.size() != m.layout.m || m.coef_x.size() != m.layout.k ||
      m.coef_sx.size() != m.layout.n_interactions()) {
    fail(ErrorKind::schema, "logistic model coefficients do not match its layout");
  }
}

inline void to_json(json& j, const NuisanceFits& f) {
  j = json{{"propensity", f.e},
           {"surrogate_score", f.r},
           {"sampling_score", f.t},
           {"surrogate_index", f.h},
           {"ridge", f.ridge}};
}

inline void from_json(const json& j, NuisanceFits& f) {
  f.e = j.at("propensity").get<LogisticModel>();
  f.r = j.at("surrogate_score").get<LogisticModel>();
  f.t = j.at("sampling_score").get<LogisticModel>();
  f.h = j.at("surrogate_index").get<LinearModel>();
  f.ridge = j.at("ridge").get<double>();
}

inline void to_json(json& j, const WeightSummary& w) {
  j = json{{"min", w.min}, {"max", w.max}, {"ess", w.ess}, {"sum", w.sum}, {"n", w.n}};
}

inline void to_json(json& j, const EstimateReport& r) {
  j = json{{"method", std::string(to_string(r.method))},
           {"tau_hat", r.tau_hat},
           {"se_bootstrap", r.se_bootstrap ? json(*r.se_bootstrap) : json(nullptr)},
           {"n_used", {{"treated", r.n_treated}, {"control", r.n_control}}},
           {"weights", {{"treated", r.treated}, {"control", r.control}}},
           {"trim", {{"epsilon", r.trim_epsilon}, {"n_trimmed", r.n_trimmed}}}};
}

inline void to_json(json& j, const TauSurrogates& t) { j = json{{"tau_s", detail::to_array(t.tau_s)}}; }

inline void to_json(json& j, const BiasBound& b) {
  j = json{{"surrogacy_multiplier", b.surrogacy_multiplier},
           {"comparability_multiplier", b.comparability_multiplier},
           {"delta_surrogacy", b.delta_surrogacy},
           {"delta_comparability", b.delta_comparability},
           {"total_bound", b.total_bound}};
}

inline void to_json(json& j, const ScoreRange& r) { j = json{{"min", r.min}, {"max", r.max}}; }

inline void to_json(json& j, const OverlapSummary& o) {
  j = json{{"propensity_experimental", o.e_experimental},
           {"surrogate_score_experimental", o.r_experimental},
           {"surrogate_score_observational", o.r_observational},
           {"sampling_score_observational", o.t_observational}};
}

inline void to_json(json& j, const EfficiencyBounds& b) {
  j = json{{"v_no_surrogacy", b.v_no_surrogacy},
           {"v_surrogacy", b.v_surrogacy},
           {"gain", b.gain},
           {"v_two_sample", b.v_two_sample ? json(*b.v_two_sample) : json(nullptr)},
           {"components", b.components},
           {"variance_mode", b.variance_mode},
           {"variance_fallback", b.variance_fallback}};
}

inline void to_json(json& j, const EstimatorSummary& s) {
  j = json{{"abs_bias", s.abs_bias}, {"sd", s.sd},         {"mean_estimate", s.mean_estimate},
           {"mc_se", s.mc_se},       {"reps", s.reps},     {"successes", s.successes},
           {"failures", s.failures}};
}

inline void to_json(json& j, const McResult& r) {
  j = json{{"true_tau", r.true_tau},
           {"reps", r.reps},
           {"separation_events", r.separation_events},
           {"score", r.score},
           {"index", r.index}};
}

inline void to_json(json& j, const DgpSpec& s) {
  j = json{{"study", std::string(to_string(s.study))},
           {"grid_value", s.grid_value},
           {"m_surrogates", s.m_surrogates},
           {"n_exp", s.n_exp},
           {"n_obs", s.n_obs},
           {"alpha0", s.alpha0},
           {"gamma0", s.gamma0},
           {"alpha", detail::to_array(s.alpha)},
           {"gamma", detail::to_array(s.gamma)},
           {"coef_rule", s.coef_rule},
           {"k_used", s.k_used ? json(*s.k_used) : json(nullptr)},
           {"coef_seed", s.coef_seed}};
}

}  // namespace surrogate
