#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "contagion/contagion.hpp"
#include "support.hpp"

using namespace contagion;
using contagion::testing::random_taus;
using contagion::testing::simple_model;

namespace {

// Independent oracle: sum over subsets written with a recursive walk.
void subsets(const std::vector<double>& t, std::size_t i, std::size_t seen, double prob, std::vector<double>& out) {
  if (i == t.size()) {
    out[seen] += prob;
    return;
  }
  subsets(t, i + 1, seen + 1, prob * t[i], out);
  subsets(t, i + 1, seen, prob * (1.0 - t[i]), out);
}

std::vector<double> brute_force(const std::vector<double>& t) {
  std::vector<double> out(t.size() + 1, 0.0);
  subsets(t, 0, 0, 1.0, out);
  return out;
}

TimeResponseFunction flat_trf(Seconds horizon = 64) {
  auto edges = log_bin_edges(horizon);
  std::vector<double> mass;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) mass.push_back(static_cast<double>(edges[b + 1] - edges[b]));
  return make_trf("flat", edges, mass);
}

}  // namespace

TEST(VisibilityAll, HandValues) {
  EXPECT_DOUBLE_EQ(visibility_all({0.5, 0.5}), 0.75);
  EXPECT_EQ(visibility_all({0.0, 0.0, 0.0}), 0.0);
  // Inclusion-exclusion: sum singles - sum pairs + triple.
  const double incl = (0.1 + 0.2 + 0.3) - (0.1 * 0.2 + 0.1 * 0.3 + 0.2 * 0.3) + 0.1 * 0.2 * 0.3;
  EXPECT_NEAR(visibility_all({0.1, 0.2, 0.3}), incl, 1e-15);
  EXPECT_NEAR(incl, 0.496, 1e-15);
}

TEST(VisibilityAll, KeepsPrecisionForTinyTaus) {
  EXPECT_NEAR(visibility_all({1e-12, 1e-12}) / 2e-12, 1.0, 1e-9);
}

TEST(TauVector, RejectsOutOfRange) {
  EXPECT_THROW(TauVector({1.0}), InvalidArgument);
  EXPECT_THROW(TauVector({-0.1}), InvalidArgument);
  EXPECT_THROW(TauVector({std::nan("")}), InvalidArgument);
}

TEST(VisibilityFirst, IdentityAndRange) {
  EXPECT_EQ(visibility_first(0.02), 0.02);
  EXPECT_EQ(visibility_first(0.0), 0.0);
  EXPECT_THROW(visibility_first(1.0), InvalidArgument);
  EXPECT_THROW(visibility_first(-1e-9), InvalidArgument);
}

TEST(VnExact, HandEnumeratedCases) {
  TauVector half{0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(v_n_exact(half, 1), 0.375);
  EXPECT_DOUBLE_EQ(v_n_exact(half, 3), 0.125);
  EXPECT_NEAR(v_n_exact({0.1, 0.2}, 1), 0.1 * 0.8 + 0.9 * 0.2, 1e-16);
  EXPECT_NEAR(v_n_exact({0.1, 0.2}, 1), 0.26, 1e-15);
}

TEST(VnExact, GuardsAndBounds) {
  EXPECT_THROW(v_n_exact(TauVector(std::vector<double>(21, 0.1)), 1), InvalidArgument);
  EXPECT_THROW(v_n_exact({0.1}, 2), InvalidArgument);
  EXPECT_NO_THROW(v_n_exact(TauVector(std::vector<double>(20, 0.1)), 3));
}

TEST(VnGenerating, KnownCases) {
  const auto v = v_n_generating({0.5, 0.5, 0.5});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_DOUBLE_EQ(v[0], 0.125);
  EXPECT_DOUBLE_EQ(v[1], 0.375);
  EXPECT_DOUBLE_EQ(v[2], 0.375);
  EXPECT_DOUBLE_EQ(v[3], 0.125);
  const auto single = v_n_generating({0.3});
  EXPECT_DOUBLE_EQ(single[0], 0.7);
  EXPECT_DOUBLE_EQ(single[1], 0.3);
  EXPECT_EQ(v_n_generating(TauVector{}), std::vector<double>{1.0});
}

TEST(VnGenerating, MatchesSubsetOracles) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 1 + rng() % 12;
    const auto t = random_taus(rng, n);
    const auto fast = v_n_generating(TauVector(t));
    const auto oracle = brute_force(t);
    for (std::size_t k = 0; k <= n; ++k) {
      EXPECT_NEAR(fast[k], oracle[k], 1e-12);
      EXPECT_NEAR(fast[k], v_n_exact(TauVector(t), k), 1e-12);
    }
  }
}

TEST(VnGenerating, NormalizationAndExpectedCount) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 1 + rng() % 16;
    const auto t = random_taus(rng, n);
    const auto v = v_n_generating(TauVector(t));
    EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
    double mean = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) mean += static_cast<double>(k) * v[k];
    EXPECT_NEAR(mean, std::accumulate(t.begin(), t.end(), 0.0), 1e-12);
  }
}

TEST(PGeneral, CollapsesToVisibilityAll) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    TauVector t(random_taus(rng, 1 + rng() % 15));
    EXPECT_EQ(p_general(t, [](int) { return 1.0; }), visibility_all(t));
  }
  EXPECT_NEAR(p_general({0.1, 0.2, 0.3}, [](int) { return 1.0; }), 0.496, 1e-15);
}

TEST(PGeneral, LinearEnhancementGivesExpectedCount) {
  EXPECT_NEAR(p_general({0.5, 0.5}, [](int n) { return static_cast<double>(n); }), 1.0, 1e-15);
}

TEST(PGeneral, SingleExposureTable) {
  EnhancementTable f({{1, 1.0}, {2, 3.0}});
  EXPECT_NEAR(p_general({0.04}, f.as_function()), 0.04, 1e-17);
}

TEST(PGeneral, NegativeEnhancementRejected) {
  EXPECT_THROW(p_general({0.1, 0.1}, [](int n) { return n == 2 ? -1.0 : 1.0; }), InvalidArgument);
}

TEST(FStar, UnityForNoEnhancement) {
  EXPECT_DOUBLE_EQ(f_star_ratio({0.2, 0.01, 0.5}, [](int) { return 1.0; }), 1.0);
}

TEST(FStar, HandComputedLinearCase) {
  const double expected = (1 * 2 * 0.01 * 0.99 + 2 * 0.01 * 0.01) / (1 - 0.99 * 0.99);
  EXPECT_NEAR(f_star_ratio({0.01, 0.01}, [](int n) { return static_cast<double>(n); }), expected, 1e-14);
  EXPECT_NEAR(expected, 0.02 / 0.0199, 1e-14);
}

TEST(FStar, SmallTauExpansion) {
  const double alpha = 0.7, beta = 0.4;
  auto f = [&](int n) { return alpha * n + beta; };
  for (double tau : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2})
    for (int ne : {2, 3, 5, 8, 10}) {
      TauVector t(std::vector<double>(ne, tau));
      const double approx = alpha + beta + alpha / 2.0 * (ne - 1) * tau;
      EXPECT_LE(std::abs(f_star_ratio(t, f) - approx), 10.0 * tau * tau) << tau << " " << ne;
    }
}

TEST(FStar, AllZeroIsUndefined) {
  EXPECT_THROW(f_star_ratio({0.0, 0.0}, [](int) { return 1.0; }), InvalidArgument);
}

TEST(EnhancementTable, Validation) {
  EXPECT_THROW(EnhancementTable({{1, 1.5}}), InvalidArgument);
  EXPECT_THROW(EnhancementTable({{2, 1.5}}), InvalidArgument);
  EXPECT_THROW(EnhancementTable({{1, 1.0}, {2, -0.1}}), InvalidArgument);
  EXPECT_THROW(EnhancementTable({{1, 1.0}, {2, INFINITY}}), InvalidArgument);
  EXPECT_THROW(EnhancementTable({{0, 1.0}, {1, 1.0}}), InvalidArgument);
  EnhancementTable t({{1, 1.0}, {3, 2.0}});
  EXPECT_THROW(t.at(2), InvalidArgument);
  const auto s = t.saturated(5);
  EXPECT_EQ(s.at(2), 1.0);
  EXPECT_EQ(s.at(4), 2.0);
  EXPECT_EQ(s.at(5), 2.0);
  EXPECT_EQ(EnhancementTable::ones(4).at(4), 1.0);
}

TEST(ModelParams, Validation) {
  auto m = simple_model(Site::Digg, 10.0, -10.0, flat_trf());
  EXPECT_NO_THROW(m.validate());
  m.p0 = 0.0;
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.p0 = 1.0;
  m.log_v_min = 0.5;
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.log_v_min = -INFINITY;
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.v_min(), 0.0);
}

TEST(PTwitter, SingleExposureReduces) {
  const auto m = simple_model(Site::Twitter, 16.6, -14.0, flat_trf());
  const Seconds times[] = {100};
  const double tau = m.tau(10, 7);
  EXPECT_NEAR(p_twitter(m, 10, times, 107), 16.6 * tau + std::exp(-14.0), 1e-15);
}

TEST(PTwitter, HandComputedWithConstants) {
  // Flat TRF over 64 s: density 1/64. P(10) from the reference Digg form.
  const auto m = simple_model(Site::Twitter, 16.6, -14.0, flat_trf(), EnhancementTable({{1, 1.0}, {2, 1.3}}));
  const double p10 = 7.6e-3 / ((std::exp(-6.2e-2 * 10) + 1.7e-3) * (10 + 3.7) * (10 + 17.8));
  const double tau = p10 / 64.0;
  const Seconds times[] = {0, 20};
  const double expected = 16.6 * 1.3 * (2 * tau - tau * tau) + std::exp(-14.0);
  EXPECT_NEAR(p_twitter(m, 10, times, 30), expected, 1e-15);
}

TEST(PTwitter, StaleAndEmptyGiveFloor) {
  const auto m = simple_model(Site::Twitter, 16.6, -14.0, flat_trf());
  const Seconds times[] = {0};
  EXPECT_DOUBLE_EQ(p_twitter(m, 5, times, 1000), std::exp(-14.0));
  EXPECT_DOUBLE_EQ(p_twitter(m, 5, {}, 1000), std::exp(-14.0));
  // An exposure after t has not arrived yet.
  const Seconds later[] = {2000};
  EXPECT_DOUBLE_EQ(p_twitter(m, 5, later, 1000), std::exp(-14.0));
}

TEST(PTwitter, MonotoneInTau) {
  // Raising P(n_f) raises every tau; the probability cannot fall.
  std::mt19937_64 rng(5);
  auto m = simple_model(Site::Twitter, 50.0, -14.0, flat_trf(), EnhancementTable({{1, 1.0}, {2, 1.5}, {3, 2.0}}));
  for (int trial = 0; trial < 50; ++trial) {
    const Seconds times[] = {0, static_cast<Seconds>(rng() % 20), static_cast<Seconds>(20 + rng() % 20)};
    const Seconds t = 40 + static_cast<Seconds>(rng() % 20);
    auto hi = m;
    hi.susceptibility.params[0] *= 1.0 + 0.5 * std::uniform_real_distribution<>(0, 1)(rng);
    EXPECT_GE(p_twitter(hi, 10, times, t), p_twitter(m, 10, times, t));
  }
}

TEST(PDigg, SingleExposureAndScaling) {
  auto m = simple_model(Site::Digg, 667.0, -19.0, flat_trf(), EnhancementTable({{1, 1.0}, {2, 1.5}, {4, 2.0}}));
  const double tau = m.tau(10, 5);
  EXPECT_NEAR(p_digg(m, 10, 100, 1, 105), 667.0 * tau + std::exp(-19.0), 1e-15);
  EXPECT_NEAR(p_digg(m, 10, 100, 4, 105) / p_digg(m, 10, 100, 2, 105), 2.0 / 1.5, 1e-14);
  EXPECT_THROW(p_digg(m, 10, 100, 3, 105), InvalidArgument);
  EXPECT_THROW(p_digg(m, 10, 100, 1, 99), InvalidArgument);
}

TEST(PDigg, DelayFromFirstExposureOnly) {
  // Exposures at 0 and 50 evaluated at 60: the delay is 60, not 10.
  auto edges = log_bin_edges(128);
  std::vector<double> mass(edges.size() - 1, 1.0);
  const auto m = simple_model(Site::Digg, 1.0, -30.0, make_trf("x", edges, mass),
                              EnhancementTable({{1, 1.0}, {2, 1.0}}));
  EXPECT_NEAR(p_digg(m, 10, 0, 2, 60), m.tau(10, 60) + std::exp(-30.0), 1e-18);
  EXPECT_NE(m.tau(10, 60), m.tau(10, 10));
}

TEST(HazardTrack, MatchesPerSecondModels) {
  const auto f = EnhancementTable({{1, 1.0}, {2, 1.4}, {3, 1.7}});
  for (Site site : {Site::Digg, Site::Twitter}) {
    auto edges = log_bin_edges(256);
    std::vector<double> mass;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) mass.push_back(1.0 / (1.0 + b));
    const auto m = simple_model(site, 300.0, -12.0, make_trf("x", edges, mass), f);
    ModelEvaluator eval(m);
    const std::vector<Seconds> exposures{10, 10, 75};
    HazardTrack track(eval, 7, exposures);
    for (Seconds s = 10; s < 400;) {
      const auto seg = track.at(s);
      for (Seconds u = s; u < std::min<Seconds>(seg.end, 400); ++u) {
        const int n_e = static_cast<int>(std::upper_bound(exposures.begin(), exposures.end(), u) - exposures.begin());
        const double want = site == Site::Digg ? p_digg(m, 7, 10, n_e, u)
                                               : p_twitter(m, 7, std::span(exposures).first(n_e), u);
        ASSERT_NEAR(seg.hazard, want, 1e-15 + 1e-12 * want) << to_string(site) << " s=" << u;
      }
      s = seg.end;
    }
  }
}

TEST(ExposureResponse, EmptyAndTrivial) {
  EXPECT_TRUE(exposure_response_curve({}).empty());
  std::vector<ExposureSeries> s{{"a", "x", 1, {1}, 2}, {"b", "x", 1, {1, 5}, 1}};
  const auto c = exposure_response_curve(s);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.at(1), 1.0);
}

TEST(ExposureResponse, CountsAtRiskPairsPerExposureCount) {
  // a: two exposures, responds after the second; b: three, never responds.
  std::vector<ExposureSeries> s{{"a", "x", 1, {1, 4}, 6}, {"b", "x", 1, {1, 2, 3}, std::nullopt}};
  const auto c = exposure_response_counts(s);
  EXPECT_EQ(c.at(1).at_risk, 2);
  EXPECT_EQ(c.at(1).responded, 0);
  EXPECT_EQ(c.at(2).at_risk, 2);
  EXPECT_EQ(c.at(2).responded, 1);
  EXPECT_EQ(c.at(3).at_risk, 1);
}
