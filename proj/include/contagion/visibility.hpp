#pragma once

// Time-response functions and the susceptibility curve.
//
// A time-response function (TRF) is the distribution of the delay between an
// exposure and the response, conditional on a response happening. It is
// stored as probability mass per logarithmic bin; density_at() converts to a
// per-second density, which is what the contagion models multiply by P(n_f).

#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "contagion/error.hpp"
#include "contagion/events.hpp"
#include "contagion/nelder_mead.hpp"

namespace contagion {

enum class Site { Twitter, Digg };

inline const char* to_string(Site s) { return s == Site::Twitter ? "twitter" : "digg"; }

inline Site parse_site(const std::string& s) {
  if (s == "twitter") return Site::Twitter;
  if (s == "digg") return Site::Digg;
  throw InvalidArgument("unknown site '" + s + "' (expected twitter or digg)");
}

/// Digg TRFs stop at 24h; stories were only followed until promotion.
inline constexpr Seconds kDiggHorizon = 24 * 3600;
inline constexpr Seconds kTwitterHorizon = 7 * 24 * 3600;

inline Seconds default_horizon(Site s) { return s == Site::Digg ? kDiggHorizon : kTwitterHorizon; }

/// Inclusive friend-count band.
struct CohortRange {
  int lo = 1;
  int hi = 1;
  std::string label;

  bool contains(int n_f) const { return n_f >= lo && n_f <= hi; }
  std::string range_string() const { return std::to_string(lo) + "-" + std::to_string(hi); }
};

inline CohortRange cohort_t1() { return {1, 2, "T1"}; }
inline CohortRange cohort_t10() { return {9, 11, "T10"}; }
inline CohortRange cohort_t100() { return {90, 110, "T100"}; }

/// Parses "lo-hi" or a single "n".
inline CohortRange parse_cohort(const std::string& s) {
  CohortRange c;
  try {
    const auto dash = s.find('-');
    if (dash == std::string::npos) {
      c.lo = c.hi = std::stoi(s);
    } else {
      c.lo = std::stoi(s.substr(0, dash));
      c.hi = std::stoi(s.substr(dash + 1));
    }
  } catch (const std::exception&) {
    throw InvalidArgument("malformed cohort range '" + s + "'");
  }
  if (c.lo > c.hi || c.lo < 0) throw InvalidArgument("malformed cohort range '" + s + "'");
  c.label = c.range_string();
  return c;
}

/// Bin edges 0, 2, 4, 8, ... doubling until the horizon. The last bin is
/// widened to end exactly at the horizon, so widths never decrease.
inline std::vector<Seconds> log_bin_edges(Seconds horizon) {
  if (horizon < 2) throw InvalidArgument("TRF horizon must be at least 2 seconds");
  std::vector<Seconds> edges{0};
  Seconds e = 2;
  while (e < horizon) {
    edges.push_back(e);
    e *= 2;
  }
  // Merge a short tail into the previous bin.
  if (edges.size() >= 2) {
    const Seconds last_width = edges.back() - edges[edges.size() - 2];
    if (horizon - edges.back() < last_width) edges.pop_back();
  }
  edges.push_back(horizon);
  return edges;
}

struct TimeResponseFunction {
  std::string cohort;
  std::vector<Seconds> bin_edges;
  /// Probability mass per bin; sums to one.
  std::vector<double> mass;

  std::size_t bins() const { return mass.size(); }
  Seconds horizon() const { return bin_edges.back(); }
  Seconds width(std::size_t b) const { return bin_edges[b + 1] - bin_edges[b]; }

  /// Bin containing `dt`, or bins() when outside [0, horizon).
  std::size_t bin_of(Seconds dt) const {
    if (dt < 0 || dt >= horizon()) return bins();
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), dt);
    return static_cast<std::size_t>(it - bin_edges.begin()) - 1;
  }

  /// Per-second density at delay `dt`; zero outside the horizon.
  double density_at(Seconds dt) const {
    const auto b = bin_of(dt);
    return b == bins() ? 0.0 : mass[b] / static_cast<double>(width(b));
  }

  double total_mass() const {
    double s = 0.0;
    for (double m : mass) s += m;
    return s;
  }

  bool same_bins(const TimeResponseFunction& o) const { return bin_edges == o.bin_edges; }
};

/// Builds a TRF from per-bin masses (normalized here).
inline TimeResponseFunction make_trf(std::string cohort, std::vector<Seconds> edges,
                                     std::vector<double> mass) {
  if (edges.size() != mass.size() + 1)
    throw InvalidArgument("TRF needs one more edge than mass entries");
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0)) throw InvalidArgument("TRF mass must be non-negative");
    total += m;
  }
  if (total <= 0.0) throw InvalidArgument("TRF has zero total mass");
  for (double& m : mass) m /= total;
  return {std::move(cohort), std::move(edges), std::move(mass)};
}

/// TRF whose delays follow a shifted power law with CDF
/// 1 - (1 + dt / scale)^(1 - alpha), truncated at `horizon`. Used as a
/// synthetic ground truth.
inline TimeResponseFunction power_decay_trf(std::string cohort, Seconds horizon, double scale, double alpha) {
  if (!(scale > 0.0) || !(alpha > 1.0)) throw InvalidArgument("power-decay TRF needs scale > 0 and alpha > 1");
  auto edges = log_bin_edges(horizon);
  auto cdf = [&](double x) { return -std::expm1((1.0 - alpha) * std::log1p(x / scale)); };
  std::vector<double> mass;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    mass.push_back(cdf(static_cast<double>(edges[b + 1])) - cdf(static_cast<double>(edges[b])));
  return make_trf(std::move(cohort), std::move(edges), std::move(mass));
}

/// Empirical TRF for one friend-count cohort: the histogram of
/// response_time - first exposure, in log bins up to `horizon`.
///
/// With single_exposure_only, only pairs that received the item exactly
/// once contribute (the Twitter estimate); otherwise the delay is measured
/// from the first exposure (the Digg estimate).
inline TimeResponseFunction estimate_trf(std::span<const ExposureSeries> series,
                                         const CohortRange& cohort, bool single_exposure_only,
                                         Seconds horizon) {
  auto edges = log_bin_edges(horizon);
  TimeResponseFunction trf{cohort.label, edges, std::vector<double>(edges.size() - 1, 0.0)};
  std::size_t used = 0;
  for (const auto& s : series) {
    if (!cohort.contains(s.n_f) || !s.responded()) continue;
    if (single_exposure_only && s.exposure_times.size() != 1) continue;
    const auto b = trf.bin_of(*s.response_time - s.first_exposure());
    if (b == trf.bins()) continue;
    trf.mass[b] += 1.0;
    ++used;
  }
  if (used == 0)
    throw InvalidArgument("no responses in cohort n_f=" + cohort.range_string() +
                          " to estimate a time-response function");
  for (double& m : trf.mass) m /= static_cast<double>(used);
  return trf;
}

/// Inverse-distance weights for the cohort centers 1, 10 and 100.
inline std::array<double, 3> interpolation_weights(double n_f, Site site) {
  constexpr double eps = 1e-6;
  const double w1 = 1.0 / ((n_f - 1.0) * (n_f - 1.0) + eps);
  const double w10 = 1.0 / ((n_f - 10.0) * (n_f - 10.0) + eps);
  const double w100 = site == Site::Twitter ? 1.0 / ((n_f - 100.0) * (n_f - 100.0) + eps)
                                            : 1.0 / (std::abs(n_f - 100.0) + eps);
  return {w1, w10, w100};
}

/// The three cohort TRFs used to interpolate T(dt, n_f) for any n_f.
struct TrfBundle {
  TimeResponseFunction t1, t10, t100;

  void check() const {
    if (!t1.same_bins(t10) || !t1.same_bins(t100))
      throw InvalidArgument("cohort TRFs do not share bin edges");
  }

  /// Interpolated per-bin mass for a given n_f.
  std::vector<double> interpolated_mass(int n_f, Site site) const {
    check();
    const auto w = interpolation_weights(n_f, site);
    const double total = w[0] + w[1] + w[2];
    std::vector<double> m(t1.bins());
    for (std::size_t b = 0; b < m.size(); ++b)
      m[b] = (w[0] * t1.mass[b] + w[1] * t10.mass[b] + w[2] * t100.mass[b]) / total;
    return m;
  }
};

/// T(dt, n_f) as the weighted mean of the three cohort TRFs at `dt`.
inline double interpolate_trf(const TimeResponseFunction& t1, const TimeResponseFunction& t10,
                              const TimeResponseFunction& t100, int n_f, Site site, Seconds dt) {
  if (!t1.same_bins(t10) || !t1.same_bins(t100))
    throw InvalidArgument("cohort TRFs do not share bin edges");
  const auto w = interpolation_weights(n_f, site);
  return (w[0] * t1.density_at(dt) + w[1] * t10.density_at(dt) + w[2] * t100.density_at(dt)) /
         (w[0] + w[1] + w[2]);
}

// ---------------------------------------------------------------------------
// Susceptibility P(n_f)

enum class SusceptibilityForm { Digg, Twitter };

inline const char* to_string(SusceptibilityForm f) {
  return f == SusceptibilityForm::Digg ? "digg" : "twitter";
}

inline SusceptibilityForm parse_form(const std::string& s) {
  if (s == "digg") return SusceptibilityForm::Digg;
  if (s == "twitter") return SusceptibilityForm::Twitter;
  throw InvalidArgument("unknown susceptibility form '" + s + "'");
}

inline std::vector<std::string> param_names(SusceptibilityForm f) {
  if (f == SusceptibilityForm::Digg) return {"A", "B", "C", "D", "E"};
  return {"A", "P", "B"};
}

/// Published constants for each form; also the optimizer's starting point.
inline std::vector<double> reference_params(SusceptibilityForm f) {
  if (f == SusceptibilityForm::Digg) return {7.6e-3, -6.2e-2, 1.7e-3, 3.7, 17.8};
  return {0.3, 0.16, 0.55};
}

/// A / ((exp(B n) + C) (n + D) (n + E))  or  A n^P / (n + B).
inline double evaluate_form(SusceptibilityForm f, std::span<const double> p, double n_f) {
  if (f == SusceptibilityForm::Digg)
    return p[0] / ((std::exp(p[1] * n_f) + p[2]) * (n_f + p[3]) * (n_f + p[4]));
  return p[0] * std::pow(n_f, p[1]) / (n_f + p[2]);
}

struct ResponseCounts {
  long long responses = 0;
  long long trials = 0;

  double probability() const {
    return trials > 0 ? static_cast<double>(responses) / static_cast<double>(trials) : 0.0;
  }
};

struct SusceptibilityCurve {
  /// n_f -> counts from single-exposure pairs. Empty bins are absent.
  std::map<int, ResponseCounts> empirical;
  SusceptibilityForm form = SusceptibilityForm::Digg;
  std::vector<double> params = reference_params(SusceptibilityForm::Digg);
  /// Largest n_f the fit saw; beyond it the curve is held constant so that
  /// extrapolation cannot run away. Zero disables the limit.
  int support_max = 0;

  double operator()(int n_f) const {
    if (support_max > 0 && n_f > support_max) n_f = support_max;
    return evaluate_form(form, params, n_f);
  }
};

/// Mean response probability per n_f among pairs exposed exactly once.
inline SusceptibilityCurve estimate_susceptibility(std::span<const ExposureSeries> series) {
  SusceptibilityCurve c;
  for (const auto& s : series) {
    if (s.exposure_times.size() != 1) continue;
    auto& counts = c.empirical[s.n_f];
    ++counts.trials;
    if (s.responded()) ++counts.responses;
  }
  return c;
}

/// Raised when the simplex search stops before converging.
class FitError : public ConvergenceError {
 public:
  FitError(const std::string& what, std::vector<double> best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const std::vector<double>& best() const { return best_; }

 private:
  std::vector<double> best_;
};

struct SusceptibilityFitOptions {
  /// Starting parameters; the form's reference constants when empty.
  std::vector<double> start;
  int max_evaluations = 200000;
};

namespace detail {

// Optimizer coordinates: logs for positive scale parameters, B scaled to
// order one.
inline std::vector<double> to_search_space(SusceptibilityForm f, std::span<const double> p) {
  if (f == SusceptibilityForm::Digg)
    return {std::log(p[0]), 10.0 * p[1], std::log(p[2]), std::log(p[3]), std::log(p[4])};
  return {std::log(p[0]), p[1], std::log(p[2])};
}

inline std::vector<double> from_search_space(SusceptibilityForm f, std::span<const double> u) {
  if (f == SusceptibilityForm::Digg)
    return {std::exp(u[0]), u[1] / 10.0, std::exp(u[2]), std::exp(u[3]), std::exp(u[4])};
  return {std::exp(u[0]), u[1], std::exp(u[2])};
}

}  // namespace detail

/// Trial-weighted RMS error in log-probability between the analytic form and
/// the empirical curve. Bins without responses carry no log-probability and
/// are skipped.
inline double susceptibility_log_rms(const SusceptibilityCurve& empirical, SusceptibilityForm form,
                                     std::span<const double> params) {
  double num = 0.0, den = 0.0;
  for (const auto& [n_f, c] : empirical.empirical) {
    if (c.responses == 0 || n_f < 1) continue;
    const double model = evaluate_form(form, params, n_f);
    if (!(model > 0.0)) return std::numeric_limits<double>::infinity();
    const double r = std::log(model) - std::log(c.probability());
    const double w = static_cast<double>(c.trials);
    num += w * r * r;
    den += w;
  }
  return std::sqrt(num / den);
}

/// Fits the analytic form to the empirical curve by simplex search.
inline SusceptibilityCurve fit_susceptibility_analytic(const SusceptibilityCurve& empirical,
                                                       SusceptibilityForm form,
                                                       const SusceptibilityFitOptions& opt = {}) {
  const auto n_params = param_names(form).size();
  std::size_t usable = 0;
  for (const auto& [n_f, c] : empirical.empirical)
    if (c.responses > 0 && n_f >= 1) ++usable;
  if (usable < n_params)
    throw InvalidArgument("susceptibility fit needs at least " + std::to_string(n_params) +
                          " n_f bins with responses, got " + std::to_string(usable));

  auto start = opt.start.empty() ? reference_params(form) : opt.start;
  {
    // Level the start: the amplitude minimizing the objective in closed form.
    double num = 0.0, den = 0.0;
    for (const auto& [n_f, c] : empirical.empirical) {
      if (c.responses == 0 || n_f < 1) continue;
      const double w = static_cast<double>(c.trials);
      num += w * (std::log(c.probability()) - std::log(evaluate_form(form, start, n_f)));
      den += w;
    }
    if (den > 0.0 && std::isfinite(num)) start[0] *= std::exp(num / den);
  }
  auto objective = [&](const std::vector<double>& u) {
    const auto p = detail::from_search_space(form, u);
    return susceptibility_log_rms(empirical, form, p);
  };
  optim::NelderMeadOptions nm;
  nm.step = 0.2;
  nm.max_evaluations = opt.max_evaluations;
  nm.restarts = 8;
  auto res = optim::nelder_mead(objective, detail::to_search_space(form, start), nm);
  auto params = detail::from_search_space(form, res.x);
  if (!res.converged)
    throw FitError("susceptibility fit did not converge after " + std::to_string(res.evaluations) +
                       " evaluations",
                   params);
  SusceptibilityCurve out = empirical;
  out.form = form;
  out.params = std::move(params);
  out.support_max = 0;
  for (const auto& [n_f, c] : empirical.empirical)
    if (c.responses > 0) out.support_max = std::max(out.support_max, n_f);
  return out;
}

/// Rescales the fitted curve so that its trial-weighted mean log-probability
/// over the observed n_f equals that of the form's reference constants.
///
/// Response data identify only the product of the overall scale P_0 and the
/// curve's amplitude. Fixing the curve's level to the reference defines the
/// unit in which P_0 is reported; the shape stays as fitted.
inline SusceptibilityCurve normalize_to_reference(SusceptibilityCurve c) {
  const auto ref = reference_params(c.form);
  double num = 0.0, den = 0.0;
  for (const auto& [n_f, counts] : c.empirical) {
    if (n_f < 1 || counts.trials == 0) continue;
    const double w = static_cast<double>(counts.trials);
    num += w * (std::log(evaluate_form(c.form, ref, n_f)) - std::log(c(n_f)));
    den += w;
  }
  if (den > 0.0) c.params[0] *= std::exp(num / den);
  return c;
}

}  // namespace contagion
