#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contagion/inference.hpp"
#include "contagion/simulate.hpp"
#include "support.hpp"

using namespace contagion;
using contagion::testing::simple_model;
using contagion::testing::two_cohort_population;

namespace {

VisibilityBin bin(int label, long long trials, long long responses, double nu = 0.0) {
  return {label, trials, responses, nu * static_cast<double>(trials)};
}

// Oracle: golden-section maximum of the binomial likelihood.
double argmax_likelihood(std::span<const VisibilityBin> bins, const std::map<int, double>& p, double hi) {
  double a = 1e-9, b = hi * (1 - 1e-12);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 300; ++i) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (enhancement_log_likelihood(bins, p, c) > enhancement_log_likelihood(bins, p, d))
      b = d;
    else
      a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(Wmap, HandComputed) {
  CalibrationCurve c{{{0.1, 0.05, 100}, {0.2, 0.2, 300}}};
  // p0 = 2, v = 0: |0.1 - 0.1| and |0.4 - 0.2|.
  EXPECT_NEAR(wmap_error(c, 2.0, 0.0), (300 * 0.2) / (100 * 0.1 + 300 * 0.2), 1e-15);
  EXPECT_NEAR(wmap_error(c, 1.0, 0.05), (100 * 0.0 + 300 * 0.05) / 70.0, 1e-15);
  EXPECT_THROW(wmap_error({{{0.0, 0.1, 10}}}, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(wmap_error({}, 1.0, 0.0), InvalidArgument);
}

TEST(ScaleFloor, RecoversExactLinearRelation) {
  const double p0 = 667.0, v = std::exp(-12.0);
  CalibrationCurve c;
  for (int i = 0; i < 20; ++i) {
    const double nu = 1e-9 * std::pow(1.6, i);
    c.points.push_back({p0 * nu + v, nu, 1000});
  }
  const auto fit = fit_scale_and_floor(c);
  EXPECT_NEAR(fit.p0 / p0, 1.0, 1e-6);
  EXPECT_NEAR(std::log(fit.v_min), -12.0, 1e-5);
  EXPECT_LT(fit.wmap, 1e-7);
  EXPECT_EQ(fit.points_used, 20u);
}

TEST(ScaleFloor, RejectsDegenerateInput) {
  CalibrationCurve few{{{0.1, 0.1, 100}, {0.2, 0.2, 100}}};
  EXPECT_THROW(fit_scale_and_floor(few), InvalidArgument);
  CalibrationCurve zero{{{0.1, 0.0, 100}, {0.2, 0.0, 100}, {0.3, 0.0, 100}}};
  EXPECT_THROW(fit_scale_and_floor(zero), InvalidArgument);
  CalibrationCurve thin{{{0.1, 0.1, 5}, {0.2, 0.2, 5}, {0.3, 0.3, 5}}};
  EXPECT_THROW(fit_scale_and_floor(thin), InvalidArgument);
}

TEST(ScaleFloor, CurveOrientation) {
  std::vector<VisibilityBin> bins{bin(-50, 1000, 4, 1e-5), bin(-40, 500, 0, 1e-4)};
  const auto c = scale_fit_curve(bins);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_DOUBLE_EQ(c.points[0].predicted, 0.004);
  EXPECT_DOUBLE_EQ(c.points[0].observed, 1e-5);
  EXPECT_EQ(c.points[0].trials, 1000);
}

TEST(Enhancement, SingleBinAnalyticCase) {
  BinsByExposure bins{{1, {bin(0, 100, 20)}}, {2, {bin(0, 100, 40)}}};
  const auto f = mle_enhancement(bins);
  EXPECT_NEAR(f.at(2), 2.0, 1e-8);
  EXPECT_EQ(f.at(1), 1.0);
}

TEST(Enhancement, ClosedFormSingleBinRatio) {
  // One bin: F = (N_r / N) / p exactly.
  for (auto [n, r] : {std::pair{1000LL, 13LL}, {50LL, 1LL}, {7000LL, 3000LL}}) {
    BinsByExposure bins{{1, {bin(3, 10000, 500)}}, {2, {bin(3, n, r)}}};
    EXPECT_NEAR(mle_enhancement(bins).at(2), (static_cast<double>(r) / n) / 0.05, 1e-10);
  }
}

TEST(Enhancement, MultiBinStationarityAndOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    BinsByExposure bins;
    std::map<int, double> p;
    const int nb = 2 + static_cast<int>(rng() % 8);
    for (int b = 0; b < nb; ++b) {
      const long long n1 = 100 + static_cast<long long>(rng() % 5000);
      const long long r1 = 1 + static_cast<long long>(rng() % (n1 / 10));
      bins[1].push_back(bin(b, n1, r1));
      const long long n2 = 10 + static_cast<long long>(rng() % 2000);
      bins[2].push_back(bin(b, n2, static_cast<long long>(rng() % (n2 / 5))));
      p[b] = static_cast<double>(r1) / n1;
    }
    if (std::all_of(bins[2].begin(), bins[2].end(), [](auto& x) { return x.responses == 0; })) continue;
    const double f = mle_enhancement(bins).at(2);
    EXPECT_LE(std::abs(enhancement_gradient(bins[2], p, f)), 1e-8) << trial;
    double max_p = 0.0;
    for (auto& [_, q] : p) max_p = std::max(max_p, q);
    EXPECT_NEAR(f, argmax_likelihood(bins[2], p, 1.0 / max_p), 1e-6 * f);
  }
}

TEST(Enhancement, ZeroResponsesAndUnmatchedBins) {
  BinsByExposure bins{{1, {bin(0, 100, 10), bin(1, 100, 0)}}, {2, {bin(0, 50, 0)}}, {3, {bin(1, 50, 5), bin(9, 10, 2)}}};
  const auto f = mle_enhancement(bins);
  EXPECT_EQ(f.at(2), 0.0);
  // n_e = 3 has no bin whose baseline frequency is positive.
  EXPECT_FALSE(f.contains(3));
  EXPECT_THROW(mle_enhancement(BinsByExposure{{2, {bin(0, 5, 1)}}}), InvalidArgument);
}

TEST(Enhancement, NoInteriorMaximumIsReported) {
  BinsByExposure bins{{1, {bin(0, 100, 10)}}, {2, {bin(0, 10, 10)}}};
  EXPECT_THROW(mle_enhancement(bins), ConvergenceError);
}

TEST(Aggregate, ConservesAtRiskSecondsAndResponses) {
  auto edges = log_bin_edges(256);
  std::vector<double> mass;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) mass.push_back(1.0 / (b + 1.0));
  for (Site site : {Site::Digg, Site::Twitter}) {
    auto m = simple_model(site, 1.0, -INFINITY, make_trf("x", edges, mass));
    ModelEvaluator eval(m);
    std::mt19937_64 rng(4);
    std::vector<ExposureSeries> series;
    long long want_trials = 0, want_responses = 0;
    for (int i = 0; i < 300; ++i) {
      ExposureSeries s{"u", "i", 1 + static_cast<int>(rng() % 120), {}, std::nullopt};
      Seconds t = static_cast<Seconds>(rng() % 100);
      const int k = 1 + static_cast<int>(rng() % 5);
      for (int e = 0; e < k; ++e) {
        s.exposure_times.push_back(t);
        t += static_cast<Seconds>(rng() % 60);
      }
      const Seconds first = s.first_exposure();
      Seconds stop = first + 256;
      if (rng() % 3 == 0) {
        s.response_time = first + static_cast<Seconds>(rng() % 300);
        if (*s.response_time < stop) {
          stop = *s.response_time + 1;
          ++want_responses;
        }
      }
      want_trials += stop - first;
      series.push_back(std::move(s));
    }
    const auto bins = aggregate_visibility(series, eval, {10, std::nullopt, 3});
    long long trials = 0, responses = 0;
    for (const auto& [ne, v] : bins) {
      EXPECT_LE(ne, 3);
      for (const auto& b : v) {
        trials += b.trials;
        responses += b.responses;
        if (b.label != kZeroVisibility) {
          EXPECT_EQ(visibility_label(b.nu_mean(), 10), b.label);
        }
      }
    }
    EXPECT_EQ(trials, want_trials);
    EXPECT_EQ(responses, want_responses);
  }
}

TEST(TrfAtRisk, HandComputedWithCensoring) {
  const auto prior = make_trf("T1", {0, 2, 4, 8, 16}, {1, 1, 1, 1});
  std::vector<ExposureSeries> s{
      {"a", "i", 1, {0}, 3},
      {"b", "i", 1, {0}, std::nullopt},
      {"c", "i", 1, {0}, 5},
      {"d", "i", 1, {0, 0}, 1},   // two exposures in the first second: skipped
      {"e", "i", 50, {0}, 1},     // other cohort
  };
  // Observation ends at 8, so bin [8, 16) has no at-risk time.
  const auto t = estimate_trf_at_risk(s, cohort_t1(), prior, 8, 0.0);
  // At risk per bin: [6, 6, 6]; responses [0, 1, 1]; masses [0, 1/3, 2/3]
  // and the prior's share 1/2 for the last bin.
  EXPECT_NEAR(t.mass[0], 0.0, 1e-15);
  EXPECT_NEAR(t.mass[1], 2.0 / 9, 1e-15);
  EXPECT_NEAR(t.mass[2], 4.0 / 9, 1e-15);
  EXPECT_NEAR(t.mass[3], 1.0 / 3, 1e-15);
}

TEST(TrfAtRisk, FloorRemovesBackgroundRate) {
  const auto prior = make_trf("T1", {0, 2, 4}, {1, 1});
  std::vector<ExposureSeries> s;
  // 100 pairs, 4 s each: 200 s per bin. Bin 0 gets 10 responses, bin 1 gets 2.
  for (int i = 0; i < 100; ++i) {
    std::optional<Seconds> r;
    if (i < 10) r = 0;
    else if (i < 12) r = 2;
    s.push_back({"u" + std::to_string(i), "i", 1, {0}, r});
  }
  // Responders leave the risk set: bin 0 has 10*1 + 90*2 = 190 s, bin 1 has
  // 2*1 + 88*2 = 178 s.
  const double v = 1.0 / 178;
  const auto t = estimate_trf_at_risk(s, cohort_t1(), prior, std::nullopt, v);
  const double m0 = (10.0 / 190 - v) * 2, m1 = (2.0 / 178 - v) * 2;
  EXPECT_NEAR(t.mass[0], m0 / (m0 + m1), 1e-14);
  // At or below the floor a bin gets nothing.
  const auto t2 = estimate_trf_at_risk(s, cohort_t1(), prior, std::nullopt, 2.0 / 178);
  EXPECT_EQ(t2.mass[1], 0.0);
  EXPECT_EQ(t2.mass[0], 1.0);
}

TEST(CohortEnhancement, SkipsEmptyCohorts) {
  auto m = simple_model(Site::Digg, 1.0, -INFINITY, make_trf("x", {0, 2, 4}, {1, 1}));
  ModelEvaluator eval(m);
  std::vector<ExposureSeries> s{{"a", "i", 1, {0}, 1}, {"b", "i", 1, {0}, std::nullopt}, {"c", "i", 2, {0, 1}, 2}};
  const std::vector<CohortRange> cohorts{cohort_t1(), cohort_t100()};
  const auto out = enhancement_by_cohort(s, cohorts, eval);
  EXPECT_EQ(out.tables.size(), 1u);
  EXPECT_EQ(out.skipped, std::vector<std::string>{"T100"});
}

TEST(ExposureResponse, TwoCohortAggregateIsNonMonotone) {
  std::mt19937_64 rng(2024);
  const auto pop = two_cohort_population(rng, 200000);
  std::vector<ExposureSeries> low, high;
  for (const auto& s : pop) (s.n_f < 50 ? low : high).push_back(s);
  for (const auto* group : {&low, &high}) {
    const auto c = exposure_response_curve(*group);
    for (auto it = std::next(c.begin()); it != c.end(); ++it) EXPECT_GT(it->second, std::prev(it)->second);
  }
  const auto agg = exposure_response_curve(pop);
  EXPECT_GT(agg.at(1), agg.at(3));
  EXPECT_LT(agg.at(3), agg.at(10));
}

TEST(FitModel, EmptyAndDegenerateSplits) {
  FitConfig cfg;
  EXPECT_THROW(fit_model({}, cfg), InvalidArgument);
  std::vector<ExposureSeries> s{{"a", "i", 1, {0}, std::nullopt}};
  EXPECT_THROW(fit_model(s, cfg), InvalidArgument);
}

TEST(FitModel, SmallSimulationProducesValidModel) {
  GroundTruth truth;
  truth.params = simple_model(Site::Digg, 667.0, -16.0, power_decay_trf("T", 3600, 300, 2),
                              EnhancementTable({{1, 1.0}, {2, 1.5}, {3, 1.8}}));
  truth.graph = {800, {DegreeKind::PowerLaw, 0, 1.5, 1, 120}};
  truth.seeding = {150, 40};
  truth.horizon = 3600;
  truth.rng_seed = 3;
  const auto ig = generate_indexed_graph(truth.graph, truth.rng_seed);
  const auto events = apply_exposure_cap(simulate_cascades(truth, ig), 20);
  const auto series = build_series(events, to_follower_graph(ig));
  FitConfig cfg;
  cfg.horizon = 3600;
  cfg.observation_end = 3600;
  const auto fit = fit_model(series, cfg);
  EXPECT_NO_THROW(fit.model.validate());
  EXPECT_EQ(fit.model.enhancement.at(1), 1.0);
  EXPECT_GE(fit.model.enhancement.max_count(), 19);
  EXPECT_GT(fit.diagnostics.responses, 0u);
  for (const auto& [ne, r] : fit.diagnostics.mle_residual) EXPECT_LE(r, 1e-6) << ne;
  // Coarse only; the acceptance suite checks recovery at scale.
  EXPECT_NEAR(std::log(fit.model.p0), std::log(667.0), std::log(3.0));
}
