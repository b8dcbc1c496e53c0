#pragma once

// Simulate from a known truth, fit on half the items, and score both the
// recovered parameters and the forecasts on the other half.

#include <cmath>
#include <string>
#include <vector>

#include "contagion/forecast.hpp"
#include "contagion/inference.hpp"
#include "contagion/rng.hpp"
#include "contagion/simulate.hpp"

namespace contagion {

/// Deterministic 50/50 item split on the FNV-1a hash of the item id.
inline bool in_training_split(const ItemId& item) { return rng::fnv1a(item) % 2 == 0; }

struct RecoveryOptions {
  /// Exposure cap applied at ingestion.
  int max_exposures = 20;
  /// Forecast window settings for the test split; observation_end is set to
  /// the truth horizon when left empty.
  ForecastOptions forecast;
  CalibrationOptions calibration;
  /// Fit settings; site, horizon and observation_end are taken from the truth.
  FitConfig fit;
  /// Skip the forecast stage.
  bool parameters_only = false;
};

struct ParameterError {
  std::string name;
  double truth = 0.0;
  double recovered = 0.0;
  double relative_error() const { return std::abs(recovered - truth) / std::abs(truth); }
};

struct RecoveryReport {
  std::size_t events = 0;
  IngestDiagnostics ingest;
  std::size_t train_series = 0, test_series = 0;
  std::size_t train_responses = 0, test_responses = 0;
  FitResult fit;
  /// p0, log_v_min and F(n_e) for every n_e the truth table lists beyond 1.
  std::vector<ParameterError> errors;
  /// Truth and F == 1 ablation over every item; fitted model over the test items.
  ForecastCalibration truth_forecast, fitted_forecast, ablated_forecast;

  double max_relative_error(const std::string& prefix) const {
    double m = 0.0;
    for (const auto& e : errors)
      if (e.name.rfind(prefix, 0) == 0) m = std::max(m, e.relative_error());
    return m;
  }
};

/// Compares a fitted model with the truth it was simulated from. The floor
/// is compared on its log, the scale on which it is stored and fitted.
inline std::vector<ParameterError> parameter_errors(const ModelParams& truth, const ModelParams& fitted) {
  std::vector<ParameterError> out{{"p0", truth.p0, fitted.p0}, {"log_v_min", truth.log_v_min, fitted.log_v_min}};
  for (const auto& [n_e, f] : truth.enhancement.values())
    if (n_e > 1)
      out.push_back({"F(" + std::to_string(n_e) + ")", f,
                     n_e <= fitted.enhancement.max_count() ? fitted.enhancement.at(n_e) : 0.0});
  return out;
}

inline RecoveryReport recovery_experiment(const GroundTruth& truth, const RecoveryOptions& opt = {}) {
  RecoveryReport r;
  const auto graph = generate_indexed_graph(truth.graph, truth.rng_seed);
  const auto follower_graph = to_follower_graph(graph);
  // Items are simulated and ingested one at a time; the cap and the series
  // are per (user, item), so this equals ingesting the merged log.
  CascadeSimulator sim(truth, graph);
  std::vector<ExposureSeries> train, test;
  for (int i = 0; i < sim.items(); ++i) {
    auto events = sim.item(i);
    r.events += events.size();
    events = apply_exposure_cap(std::move(events), opt.max_exposures, &r.ingest);
    for (auto& s : build_series(events, follower_graph, &r.ingest))
      (in_training_split(s.item) ? train : test).push_back(std::move(s));
  }
  r.train_series = train.size();
  r.test_series = test.size();
  for (const auto& s : train) r.train_responses += s.responded();
  for (const auto& s : test) r.test_responses += s.responded();

  auto cfg = opt.fit;
  cfg.site = truth.params.site;
  cfg.horizon = truth.params.trf.t1.horizon();
  cfg.observation_end = truth.horizon;
  cfg.max_exposures = opt.max_exposures;
  r.fit = fit_model(train, cfg);
  r.errors = parameter_errors(truth.params, r.fit.model);

  if (!opt.parameters_only) {
    auto fo = opt.forecast;
    if (!fo.observation_end) fo.observation_end = truth.horizon;
    fo.enhancement = nullptr;
    r.fitted_forecast = forecast_calibration(test, r.fit.model, fo, opt.calibration);
    // Nothing was fitted for the truth model, so it is scored on every item.
    std::vector<ExposureSeries> all = std::move(train);
    all.insert(all.end(), std::make_move_iterator(test.begin()), std::make_move_iterator(test.end()));
    auto truth_model = truth.params;
    truth_model.enhancement = truth.params.enhancement.saturated(
        std::max(truth.params.enhancement.max_count(), opt.max_exposures + truth.seeding.initial_posters));
    r.truth_forecast = forecast_calibration(all, truth_model, fo, opt.calibration);
    const auto ones = EnhancementTable::ones(truth_model.enhancement.max_count());
    fo.enhancement = &ones;
    r.ablated_forecast = forecast_calibration(all, truth_model, fo, opt.calibration);
  }
  return r;
}

}  // namespace contagion
