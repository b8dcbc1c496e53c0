#pragma once

// Fitting the scale P_0 and floor v_min, and maximum-likelihood social
// enhancement factors over visibility-binned exposure data.

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "contagion/contagion.hpp"
#include "contagion/error.hpp"
#include "contagion/nelder_mead.hpp"

namespace contagion {

/// Trials and responses that share a visibility bin. One trial is one
/// at-risk second.
struct VisibilityBin {
  /// floor(bins_per_decade * log10(nu)); kZeroVisibility when nu == 0.
  int label = 0;
  long long trials = 0;
  long long responses = 0;
  /// Sum of nu over the trials; nu_mean() is the trial-weighted mean.
  double nu_sum = 0.0;

  double nu_mean() const { return trials > 0 ? nu_sum / static_cast<double>(trials) : 0.0; }
  double frequency() const {
    return trials > 0 ? static_cast<double>(responses) / static_cast<double>(trials) : 0.0;
  }
};

inline constexpr int kZeroVisibility = INT_MIN;

inline int visibility_label(double nu, int bins_per_decade) {
  if (!(nu > 0.0)) return kZeroVisibility;
  return static_cast<int>(std::floor(bins_per_decade * std::log10(nu)));
}

using BinsByExposure = std::map<int, std::vector<VisibilityBin>>;

struct AggregateOptions {
  int bins_per_decade = 10;
  /// End of the observation period (exclusive). When unset, each series is
  /// observed for one TRF horizon after its first exposure.
  std::optional<Seconds> observation_end;
  /// n_e above this is folded into the last count.
  int max_exposures = 64;
};

/// Splits each series' at-risk seconds by (n_e, visibility bin). Visibility
/// uses the model's susceptibility and TRFs; P_0, v_min and F do not enter.
inline BinsByExposure aggregate_visibility(std::span<const ExposureSeries> series,
                                           ModelEvaluator& eval, const AggregateOptions& opt = {}) {
  std::map<int, std::map<int, VisibilityBin>> acc;
  const auto neutral = EnhancementTable::ones(std::max(opt.max_exposures, 1) + 1024);
  for (const auto& s : series) {
    const Seconds first = s.first_exposure();
    Seconds stop = opt.observation_end ? *opt.observation_end : first + eval.horizon();
    if (s.response_time) stop = std::min(stop, *s.response_time + 1);
    HazardTrack track(eval, s.n_f, s.exposure_times, &neutral);
    for (Seconds t = first; t < stop;) {
      const auto seg = track.at(t);
      const Seconds end = std::min(seg.end, stop);
      auto& bin = acc[std::min(seg.n_e, opt.max_exposures)][visibility_label(seg.visibility, opt.bins_per_decade)];
      const long long len = end - t;
      bin.trials += len;
      bin.nu_sum += seg.visibility * static_cast<double>(len);
      if (s.response_time && *s.response_time >= t && *s.response_time < end) ++bin.responses;
      t = end;
    }
  }
  BinsByExposure out;
  for (auto& [ne, bins] : acc)
    for (auto& [label, b] : bins) {
      b.label = label;
      out[ne].push_back(b);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration curves and WMAP

struct CalibrationPoint {
  double predicted = 0.0;
  double observed = 0.0;
  long long trials = 0;
};

struct CalibrationCurve {
  std::vector<CalibrationPoint> points;
};

/// Weighted mean absolute percent error of p0 * O + v_min against p.
///
/// Each point's percent error |p0 O + v_min - p| / p is weighted by its
/// trial count times p, i.e. by the expected number of responses, so the
/// value equals sum trials |p0 O + v_min - p| / sum trials p.
inline double wmap_error(const CalibrationCurve& curve, double p0, double v_min) {
  double num = 0.0, den = 0.0;
  for (const auto& pt : curve.points) {
    if (!(pt.predicted > 0.0))
      throw InvalidArgument("WMAP undefined for a point with predicted probability 0");
    const double w = static_cast<double>(pt.trials);
    num += w * std::abs(p0 * pt.observed + v_min - pt.predicted);
    den += w * pt.predicted;
  }
  if (!(den > 0.0)) throw InvalidArgument("WMAP of an empty curve");
  return num / den;
}

struct ScaleFloorFit {
  double p0 = 0.0;
  double v_min = 0.0;
  double wmap = 0.0;
  std::size_t points_used = 0;
};

struct ScaleFloorOptions {
  /// Points with fewer trials are excluded from the fit.
  long long min_trials = 30;
  double log10_p0_lo = -3.0, log10_p0_hi = 6.0;
  double ln_v_lo = -40.0, ln_v_hi = -1.0;
};

/// Minimizes wmap_error over (p0, v_min): a coarse log grid, then simplex
/// refinement in (ln p0, ln v_min).
inline ScaleFloorFit fit_scale_and_floor(const CalibrationCurve& curve, const ScaleFloorOptions& opt = {}) {
  CalibrationCurve used;
  for (const auto& pt : curve.points)
    if (pt.trials >= opt.min_trials) used.points.push_back(pt);
  if (used.points.size() < 3)
    throw InvalidArgument("scale/floor fit needs at least 3 calibration points with >= " +
                          std::to_string(opt.min_trials) + " trials");
  if (std::all_of(used.points.begin(), used.points.end(), [](const auto& p) { return p.observed == 0.0; }))
    throw InvalidArgument("scale/floor fit is degenerate: every observed value is zero");

  auto objective = [&](const std::vector<double>& x) {
    return wmap_error(used, std::exp(x[0]), std::exp(x[1]));
  };
  std::vector<double> best{0.0, 0.0};
  double best_value = std::numeric_limits<double>::infinity();
  for (double lp = opt.log10_p0_lo; lp <= opt.log10_p0_hi + 1e-9; lp += 0.25) {
    for (double lv = opt.ln_v_lo; lv <= opt.ln_v_hi + 1e-9; lv += 1.0) {
      std::vector<double> x{lp * std::log(10.0), lv};
      const double v = objective(x);
      if (v < best_value) {
        best_value = v;
        best = x;
      }
    }
  }
  optim::NelderMeadOptions nm;
  nm.step = 0.3;
  nm.f_tolerance = 1e-15;
  nm.x_tolerance = 1e-12;
  nm.restarts = 10;
  auto res = optim::nelder_mead(
      [&](const std::vector<double>& x) {
        if (x[1] < opt.ln_v_lo - 20.0) return std::numeric_limits<double>::infinity();
        return objective(x);
      },
      best, nm);
  return {std::exp(res.x[0]), std::exp(res.x[1]), res.value, used.points.size()};
}

/// Calibration points for the scale/floor fit from single-exposure bins.
/// Each point compares the observed per-second response frequency
/// (`predicted` slot, the target) with the mean unscaled visibility
/// (`observed` slot, the term multiplied by p0), so that
/// wmap_error(curve, p0, v_min) measures p0 * nu + v_min against the data.
inline CalibrationCurve scale_fit_curve(std::span<const VisibilityBin> single_exposure_bins) {
  CalibrationCurve c;
  for (const auto& b : single_exposure_bins) {
    if (b.responses == 0) continue;
    c.points.push_back({b.frequency(), b.nu_mean(), b.trials});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood enhancement

/// d/dF of the binomial log-likelihood at n_e, given P(nu) from n_e = 1.
inline double enhancement_gradient(std::span<const VisibilityBin> bins,
                                   const std::map<int, double>& p_nu, double f) {
  double g = 0.0;
  for (const auto& b : bins) {
    const double p = p_nu.at(b.label);
    if (b.responses > 0) g += static_cast<double>(b.responses) / f;
    g -= static_cast<double>(b.trials - b.responses) * p / (1.0 - f * p);
  }
  return g;
}

/// Binomial log-likelihood without the constant binomial coefficients.
inline double enhancement_log_likelihood(std::span<const VisibilityBin> bins,
                                         const std::map<int, double>& p_nu, double f) {
  double l = 0.0;
  for (const auto& b : bins) {
    const double q = f * p_nu.at(b.label);
    if (b.responses > 0) l += static_cast<double>(b.responses) * std::log(q);
    if (b.trials > b.responses) l += static_cast<double>(b.trials - b.responses) * std::log1p(-q);
  }
  return l;
}

/// n_e = 1 response frequency per visibility label.
inline std::map<int, double> baseline_probabilities(const BinsByExposure& bins) {
  auto it = bins.find(1);
  if (it == bins.end() || it->second.empty())
    throw InvalidArgument("enhancement MLE needs single-exposure (n_e = 1) bins");
  std::map<int, double> p;
  for (const auto& b : it->second)
    if (b.trials > 0) p[b.label] = b.frequency();
  return p;
}

/// Bins at one n_e that can enter the likelihood: those with a matching
/// n_e = 1 bin of non-zero frequency.
inline std::vector<VisibilityBin> matched_bins(std::span<const VisibilityBin> bins,
                                               const std::map<int, double>& p_nu) {
  std::vector<VisibilityBin> out;
  for (const auto& b : bins) {
    auto it = p_nu.find(b.label);
    if (it != p_nu.end() && it->second > 0.0 && b.trials > 0) out.push_back(b);
  }
  return out;
}

/// Root of the likelihood gradient in F on (0, 1 / max P(nu)) by bisection,
/// carried to the resolution of a double.
inline double solve_enhancement(std::span<const VisibilityBin> bins, const std::map<int, double>& p_nu, int n_e) {
  long long responses = 0;
  double max_p = 0.0;
  for (const auto& b : bins) {
    responses += b.responses;
    max_p = std::max(max_p, p_nu.at(b.label));
  }
  if (responses == 0) return 0.0;
  double lo = 0.0;
  double hi = 1.0 / max_p;
  const double g_hi = enhancement_gradient(bins, p_nu, std::nextafter(hi, 0.0));
  if (g_hi > 0.0)
    throw ConvergenceError("no sign change for F(" + std::to_string(n_e) + ") on (0, " +
                           std::to_string(hi) + "): gradient +inf at 0 and " + std::to_string(g_hi) +
                           " at the upper end");
  for (int iter = 0; iter < 4000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (enhancement_gradient(bins, p_nu, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  if (lo == 0.0) return hi;
  return std::abs(enhancement_gradient(bins, p_nu, lo)) <= std::abs(enhancement_gradient(bins, p_nu, hi)) ? lo : hi;
}

/// F(1) = 1 and P(nu) = N_r / N from the n_e = 1 bins; every other F(n_e)
/// maximizes its binomial likelihood given those P(nu).
inline EnhancementTable mle_enhancement(const BinsByExposure& bins_by_ne, const std::string& cohort = "all") {
  const auto p_nu = baseline_probabilities(bins_by_ne);
  std::map<int, double> f{{1, 1.0}};
  for (const auto& [n_e, bins] : bins_by_ne) {
    if (n_e <= 1) continue;
    const auto used = matched_bins(bins, p_nu);
    if (used.empty()) continue;
    f[n_e] = solve_enhancement(used, p_nu, n_e);
  }
  return EnhancementTable(std::move(f), cohort);
}

struct CohortEnhancement {
  std::map<std::string, EnhancementTable> tables;
  /// Cohorts skipped because no series fell in them.
  std::vector<std::string> skipped;
};

/// Independent enhancement MLE per friend-count cohort.
inline CohortEnhancement enhancement_by_cohort(std::span<const ExposureSeries> series,
                                               std::span<const CohortRange> cohorts, ModelEvaluator& eval,
                                               const AggregateOptions& opt = {}) {
  CohortEnhancement out;
  for (const auto& c : cohorts) {
    std::vector<ExposureSeries> members;
    for (const auto& s : series)
      if (c.contains(s.n_f)) members.push_back(s);
    const auto label = c.label.empty() ? c.range_string() : c.label;
    if (members.empty()) {
      out.skipped.push_back(label);
      continue;
    }
    out.tables.emplace(label, mle_enhancement(aggregate_visibility(members, eval, opt), label));
  }
  return out;
}

// ---------------------------------------------------------------------------
// At-risk TRF refinement

/// Censoring-aware TRF for one cohort. Counts, per delay bin, the seconds a
/// pair spent at risk with exactly one exposure and the responses in those
/// seconds; the per-second rate minus the floor `v_min`, times the bin width,
/// gives the bin mass. Restricting to n_e = 1 keeps enhancement out of the
/// shape. A rate at or below the floor gives zero mass; bins without
/// at-risk time fall back to `prior`'s share of the mass.
inline TimeResponseFunction estimate_trf_at_risk(std::span<const ExposureSeries> series,
                                                 const CohortRange& cohort, const TimeResponseFunction& prior,
                                                 std::optional<Seconds> observation_end, double v_min) {
  const auto nb = prior.bins();
  std::vector<double> at_risk(nb, 0.0), responses(nb, 0.0);
  for (const auto& s : series) {
    if (!cohort.contains(s.n_f)) continue;
    const Seconds first = s.first_exposure();
    Seconds stop = first + prior.horizon();
    if (observation_end) stop = std::min(stop, *observation_end);
    if (s.exposures_at(first) > 1) continue;
    if (s.exposure_times.size() > 1) stop = std::min(stop, s.exposure_times[1]);
    bool counted = false;
    if (s.response_time && *s.response_time < stop) {
      stop = *s.response_time + 1;
      counted = true;
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const Seconds lo = std::max(first + prior.bin_edges[b], first);
      const Seconds hi = std::min(first + prior.bin_edges[b + 1], stop);
      if (hi > lo) at_risk[b] += static_cast<double>(hi - lo);
      if (hi >= stop) break;
    }
    if (counted) responses[prior.bin_of(*s.response_time - first)] += 1.0;
  }
  std::vector<double> mass(nb, 0.0);
  std::vector<bool> estimated(nb, false);
  double est_mass = 0.0, est_prior = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (at_risk[b] <= 0.0) continue;
    const double excess = responses[b] / at_risk[b] - v_min;
    estimated[b] = true;
    if (!(excess > 0.0)) continue;
    mass[b] = excess * static_cast<double>(prior.width(b));
    est_mass += mass[b];
    est_prior += prior.mass[b];
  }
  if (est_mass <= 0.0) return prior;
  // Unestimated bins keep the prior's mass relative to the estimated ones.
  const double scale = est_prior > 0.0 ? est_mass / est_prior : 0.0;
  for (std::size_t b = 0; b < nb; ++b)
    if (!estimated[b]) mass[b] = prior.mass[b] * scale;
  return make_trf(prior.cohort, prior.bin_edges, std::move(mass));
}

// ---------------------------------------------------------------------------
// End-to-end fit

struct FitConfig {
  Site site = Site::Digg;
  /// TRF horizon; defaults to the site's (24h Digg, 7 days Twitter).
  std::optional<Seconds> horizon;
  std::optional<Seconds> observation_end;
  /// Report P_0 relative to the reference susceptibility level (see
  /// normalize_to_reference). When false the fitted level is kept.
  bool reference_amplitude = true;
  /// Enhancement table is filled up to max_exposures - 1 (the exposure cap).
  int max_exposures = 20;
  /// Finer than the calibration default; the enhancement MLE gets more cells.
  int bins_per_decade = 20;
  ScaleFloorOptions scale;
  /// Digg only: choose E jointly with P_0 and v_min by minimizing WMAP.
  bool joint_e = false;
  /// Alternations of estimate_trf_at_risk and the scale/floor fit after the
  /// histogram TRFs. Zero keeps the histogram estimates.
  int trf_refinement_passes = 3;
};

struct FitDiagnostics {
  double susceptibility_log_rms = 0.0;
  double scale_wmap = 0.0;
  std::size_t scale_points = 0;
  /// n_e -> |likelihood gradient| at the returned F(n_e).
  std::map<int, double> mle_residual;
  /// n_e values estimated from data; the rest repeat the previous factor.
  std::vector<int> estimated_counts;
  std::size_t series = 0;
  std::size_t responses = 0;
};

struct FitResult {
  ModelParams model;
  FitDiagnostics diagnostics;
};

namespace detail {

inline ScaleFloorFit fit_scale_for(const std::vector<ExposureSeries>& series, ModelParams& model,
                                   const FitConfig& cfg, BinsByExposure* bins_out = nullptr) {
  model.p0 = 1.0;
  model.log_v_min = -std::numeric_limits<double>::infinity();
  model.enhancement = EnhancementTable();
  ModelEvaluator eval(model);
  AggregateOptions agg{cfg.bins_per_decade, cfg.observation_end, cfg.max_exposures};
  auto bins = aggregate_visibility(series, eval, agg);
  auto single = bins.find(1);
  if (single == bins.end()) throw InvalidArgument("no single-exposure at-risk time in the training data");
  auto sf = fit_scale_and_floor(scale_fit_curve(single->second), cfg.scale);
  if (bins_out) *bins_out = std::move(bins);
  return sf;
}

}  // namespace detail

/// Fits TRFs, susceptibility, P_0 / v_min and F(n_e) from training series.
inline FitResult fit_model(const std::vector<ExposureSeries>& series, const FitConfig& cfg) {
  if (series.empty()) throw InvalidArgument("empty training split");
  FitResult out;
  auto& m = out.model;
  m.site = cfg.site;
  const Seconds horizon = cfg.horizon ? *cfg.horizon : default_horizon(cfg.site);
  const bool single_only = cfg.site == Site::Twitter;
  m.trf = {estimate_trf(series, cohort_t1(), single_only, horizon),
           estimate_trf(series, cohort_t10(), single_only, horizon),
           estimate_trf(series, cohort_t100(), single_only, horizon)};

  const auto form = cfg.site == Site::Digg ? SusceptibilityForm::Digg : SusceptibilityForm::Twitter;
  m.susceptibility = fit_susceptibility_analytic(estimate_susceptibility(series), form);
  out.diagnostics.susceptibility_log_rms =
      susceptibility_log_rms(m.susceptibility, form, m.susceptibility.params);
  if (cfg.reference_amplitude) m.susceptibility = normalize_to_reference(m.susceptibility);

  if (cfg.joint_e && cfg.site == Site::Digg) {
    // Golden-section search over ln E.
    auto wmap_at = [&](double ln_e) {
      auto trial = m;
      trial.susceptibility.params[4] = std::exp(ln_e);
      return detail::fit_scale_for(series, trial, cfg).wmap;
    };
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(0.5), b = std::log(1000.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = wmap_at(c), fd = wmap_at(d);
    for (int i = 0; i < 40 && b - a > 1e-4; ++i) {
      if (fc < fd) {
        b = d, d = c, fd = fc;
        c = b - g * (b - a), fc = wmap_at(c);
      } else {
        a = c, c = d, fc = fd;
        d = a + g * (b - a), fd = wmap_at(d);
      }
    }
    m.susceptibility.params[4] = std::exp(0.5 * (a + b));
  }

  BinsByExposure bins;
  auto sf = detail::fit_scale_for(series, m, cfg, &bins);
  const std::array<CohortRange, 3> cohorts{cohort_t1(), cohort_t10(), cohort_t100()};
  for (int pass = 0; pass < cfg.trf_refinement_passes; ++pass) {
    // Rates are per second on the data scale, so the floor is the fitted v_min.
    const std::array trfs{&m.trf.t1, &m.trf.t10, &m.trf.t100};
    for (std::size_t c = 0; c < cohorts.size(); ++c)
      *trfs[c] = estimate_trf_at_risk(series, cohorts[c], *trfs[c], cfg.observation_end, sf.v_min);
    sf = detail::fit_scale_for(series, m, cfg, &bins);
  }
  m.p0 = sf.p0;
  m.log_v_min = std::log(sf.v_min);
  out.diagnostics.scale_wmap = sf.wmap;
  out.diagnostics.scale_points = sf.points_used;

  auto table = mle_enhancement(bins);
  const auto p_nu = baseline_probabilities(bins);
  for (const auto& [n_e, f] : table.values()) {
    out.diagnostics.estimated_counts.push_back(n_e);
    // F = 0 is a boundary maximum (no responses); no stationarity to report.
    if (n_e > 1 && f > 0.0)
      out.diagnostics.mle_residual[n_e] = std::abs(enhancement_gradient(matched_bins(bins.at(n_e), p_nu), p_nu, f));
  }
  m.enhancement = table.saturated(std::max(cfg.max_exposures - 1, table.max_count()));
  out.diagnostics.series = series.size();
  for (const auto& s : series) out.diagnostics.responses += s.responded();
  return out;
}

}  // namespace contagion
