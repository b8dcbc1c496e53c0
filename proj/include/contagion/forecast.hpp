#pragma once

// Window forecasts for at-risk pairs and predicted-vs-observed calibration.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "contagion/contagion.hpp"
#include "contagion/inference.hpp"

namespace contagion {

inline constexpr Seconds kDefaultWindow = 30;

struct ForecastPoint {
  UserId user;
  ItemId item;
  Seconds window_start = 0;
  Seconds window_len = kDefaultWindow;
  double predicted = 0.0;
  bool responded = false;
};

/// Probability of a response in [t, t + window): 1 - prod_s (1 - p(s)),
/// with exposures counted from their arrival second.
inline double forecast_window(ModelEvaluator& eval, const ExposureSeries& series, Seconds t, Seconds window,
                              const EnhancementTable* enhancement = nullptr) {
  if (window <= 0) throw InvalidArgument("forecast window must be positive");
  if (series.response_time && *series.response_time < t)
    throw InvalidArgument("series for user '" + series.user + "' is not at risk at t=" + std::to_string(t));
  HazardTrack track(eval, series.n_f, series.exposure_times, enhancement);
  const Seconds end = t + window;
  double log_none = 0.0;
  for (Seconds s = t; s < end;) {
    const auto seg = track.at(s);
    const Seconds e = std::min(seg.end, end);
    log_none += static_cast<double>(e - s) * std::log1p(-seg.hazard);
    s = e;
  }
  return -std::expm1(log_none);
}

inline double forecast_window(const ModelParams& params, const ExposureSeries& series, Seconds t,
                              Seconds window) {
  ModelEvaluator eval(params);
  return forecast_window(eval, series, t, window);
}

struct ForecastOptions {
  Seconds window = kDefaultWindow;
  /// Distance between window starts; equal to window for disjoint tiling.
  Seconds stride = kDefaultWindow;
  /// Exclusive end of observation; defaults to one TRF horizon after the
  /// first exposure.
  std::optional<Seconds> observation_end;
  /// Replaces the model's enhancement table (F == 1 ablation).
  const EnhancementTable* enhancement = nullptr;
};

/// Receives `count` consecutive windows, `stride` apart, starting at
/// `window_start`, that share the same prediction and outcome.
using ForecastSink =
    std::function<void(Seconds window_start, Seconds window_len, double predicted, bool responded, long long count)>;

/// Tiles the at-risk period of a series with windows. Windows lying inside
/// one constant-hazard segment are reported as a single run.
inline void forecast_series(ModelEvaluator& eval, const ExposureSeries& series, const ForecastOptions& opt,
                            const ForecastSink& sink) {
  if (opt.window <= 0 || opt.stride <= 0) throw InvalidArgument("window and stride must be positive");
  const Seconds first = series.first_exposure();
  const Seconds obs_end = opt.observation_end ? *opt.observation_end : first + eval.horizon();
  HazardTrack track(eval, series.n_f, series.exposure_times, opt.enhancement);
  const auto response = series.response_time;
  for (Seconds s = first; s < obs_end;) {
    if (response && *response < s) break;
    const Seconds len = std::min(opt.window, obs_end - s);
    const auto seg = track.at(s);
    Seconds limit = std::min(seg.end, obs_end);
    if (response) limit = std::min(limit, *response);
    if (len == opt.window && s + opt.window <= limit) {
      const long long count = (limit - opt.window - s) / opt.stride + 1;
      const double p = -std::expm1(static_cast<double>(opt.window) * std::log1p(-seg.hazard));
      sink(s, len, p, false, count);
      s += count * opt.stride;
      continue;
    }
    const double p = forecast_window(eval, series, s, len, opt.enhancement);
    const bool hit = response && *response >= s && *response < s + len;
    sink(s, len, p, hit, 1);
    s += opt.stride;
  }
}

// ---------------------------------------------------------------------------

struct CalibrationBin {
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  double predicted_mean = 0.0;
  double observed = 0.0;
  long long trials = 0;
  /// Fewer trials than the floor; reported but left out of WMAP.
  bool flagged = false;
};

struct CalibrationOptions {
  int bins_per_decade = 10;
  long long min_trials = 30;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  /// Unflagged bins as (mean predicted, observed frequency, trials).
  CalibrationCurve curve;
  double wmap = 0.0;
};

/// Streaming accumulator behind calibration().
class CalibrationAccumulator {
 public:
  explicit CalibrationAccumulator(CalibrationOptions opt = {}) : opt_(opt) {}

  void add(double predicted, bool responded, long long count = 1) {
    auto& c = cells_[visibility_label(predicted, opt_.bins_per_decade)];
    c.trials += count;
    if (responded) c.responses += count;
    c.predicted_sum += predicted * static_cast<double>(count);
  }

  long long total_trials() const {
    long long n = 0;
    for (const auto& [_, c] : cells_) n += c.trials;
    return n;
  }

  CalibrationReport report() const {
    if (cells_.empty()) throw InvalidArgument("calibration of an empty forecast set");
    CalibrationReport r;
    for (const auto& [label, c] : cells_) {
      CalibrationBin b;
      if (label == kZeroVisibility) {
        b.bin_lo = b.bin_hi = 0.0;
      } else {
        b.bin_lo = std::pow(10.0, static_cast<double>(label) / opt_.bins_per_decade);
        b.bin_hi = std::pow(10.0, static_cast<double>(label + 1) / opt_.bins_per_decade);
      }
      b.trials = c.trials;
      b.predicted_mean = c.predicted_sum / static_cast<double>(c.trials);
      b.observed = static_cast<double>(c.responses) / static_cast<double>(c.trials);
      b.flagged = c.trials < opt_.min_trials || label == kZeroVisibility;
      r.bins.push_back(b);
      if (!b.flagged) r.curve.points.push_back({b.predicted_mean, b.observed, b.trials});
    }
    if (r.curve.points.empty()) throw InvalidArgument("every calibration bin is below the trial floor");
    r.wmap = wmap_error(r.curve, 1.0, 0.0);
    return r;
  }

 private:
  struct Cell {
    long long trials = 0;
    long long responses = 0;
    double predicted_sum = 0.0;
  };
  CalibrationOptions opt_;
  std::map<int, Cell> cells_;
};

/// Bins forecasts by predicted probability (log-spaced) and compares the
/// mean prediction with the observed response frequency in each bin.
inline CalibrationReport calibration(std::span<const ForecastPoint> points, const CalibrationOptions& opt = {}) {
  if (points.empty()) throw InvalidArgument("calibration of an empty forecast set");
  CalibrationAccumulator acc(opt);
  for (const auto& p : points) acc.add(p.predicted, p.responded);
  return acc.report();
}

/// Forecasts every series and bins the windows for calibration without
/// materializing individual points.
struct ForecastCalibration {
  CalibrationReport report;
  long long windows = 0;
  long long responses = 0;
};

inline ForecastCalibration forecast_calibration(std::span<const ExposureSeries> series, const ModelParams& model,
                                                const ForecastOptions& opt = {},
                                                const CalibrationOptions& copt = {}) {
  ModelEvaluator eval(model);
  CalibrationAccumulator acc(copt);
  ForecastCalibration out;
  for (const auto& s : series)
    forecast_series(eval, s, opt, [&](Seconds, Seconds, double p, bool hit, long long n) {
      acc.add(p, hit, n);
      out.windows += n;
      if (hit) out.responses += n;
    });
  out.report = acc.report();
  return out;
}

}  // namespace contagion
