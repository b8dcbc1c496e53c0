#pragma once

// Small fixtures shared by the unit tests.

#include <random>
#include <vector>

#include "contagion/contagion.hpp"
#include "contagion/visibility.hpp"

namespace contagion::testing {

/// Same TRF for all three cohorts.
inline TrfBundle uniform_bundle(const TimeResponseFunction& t) {
  auto a = t, b = t, c = t;
  a.cohort = "T1";
  b.cohort = "T10";
  c.cohort = "T100";
  return {a, b, c};
}

/// Model with the reference Digg susceptibility curve and one TRF shared
/// by every cohort.
inline ModelParams simple_model(Site site, double p0, double log_v, const TimeResponseFunction& trf,
                                EnhancementTable f = EnhancementTable()) {
  ModelParams m;
  m.site = site;
  m.p0 = p0;
  m.log_v_min = log_v;
  m.enhancement = std::move(f);
  m.susceptibility.form = SusceptibilityForm::Digg;
  m.susceptibility.params = reference_params(SusceptibilityForm::Digg);
  m.trf = uniform_bundle(trf);
  return m;
}

inline std::vector<double> random_taus(std::mt19937_64& rng, std::size_t n, double hi = 0.99) {
  std::uniform_real_distribution<double> u(0.0, hi);
  std::vector<double> t(n);
  for (auto& x : t) x = u(rng);
  return t;
}

/// Two friend-count cohorts whose response probability rises with each
/// exposure. The low-n_f cohort is far more responsive but rarely sees more
/// than two exposures; the high-n_f cohort sees up to `max_high`. The n-th
/// exposure arrives at second n - 1 and a response to it in the same second.
inline std::vector<ExposureSeries> two_cohort_population(std::mt19937_64& rng, int pairs_per_cohort,
                                                         int max_high = 10) {
  std::vector<ExposureSeries> out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto add = [&](int n_f, int exposures, auto hazard, int id) {
    ExposureSeries s{"u" + std::to_string(id), "i", n_f, {}, std::nullopt};
    for (int n = 1; n <= exposures; ++n) {
      s.exposure_times.push_back(n - 1);
      if (u(rng) < hazard(n)) {
        s.response_time = n - 1;
        break;
      }
    }
    out.push_back(std::move(s));
  };
  int id = 0;
  for (int i = 0; i < pairs_per_cohort; ++i)
    add(2, 1 + static_cast<int>(rng() % 2), [](int n) { return 0.30 + 0.05 * n; }, id++);
  for (int i = 0; i < pairs_per_cohort; ++i)
    add(100, 1 + static_cast<int>(rng() % max_high), [](int n) { return 0.01 * n; }, id++);
  return out;
}

}  // namespace contagion::testing
