#pragma once

// Multi-exposure response models.
//
// Each delivered exposure i is discovered independently with probability
// tau_i = P(n_f) * T(t - t_i, n_f). V_n is the probability of discovering
// exactly n of them; the general model weights V_n by an enhancement f(n).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "contagion/error.hpp"
#include "contagion/events.hpp"
#include "contagion/visibility.hpp"

namespace contagion {

/// Per-exposure discovery probabilities, each in [0, 1).
class TauVector {
 public:
  TauVector() = default;
  TauVector(std::initializer_list<double> taus) : TauVector(std::vector<double>(taus)) {}
  explicit TauVector(std::vector<double> taus) : taus_(std::move(taus)) {
    for (double t : taus_)
      if (!(t >= 0.0 && t < 1.0))
        throw InvalidArgument("tau must lie in [0, 1), got " + std::to_string(t));
  }

  std::span<const double> values() const { return taus_; }
  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t i) const { return taus_[i]; }

 private:
  std::vector<double> taus_;
};

/// Probability of discovering at least one exposure: 1 - prod(1 - tau_i).
/// Evaluated through log1p/expm1 so small taus keep full relative precision.
inline double visibility_all(const TauVector& taus) {
  double log_none = 0.0;
  for (double t : taus.values()) log_none += std::log1p(-t);
  return -std::expm1(log_none);
}

/// Visibility when only the first exposure can be found.
inline double visibility_first(double tau_first) {
  if (!(tau_first >= 0.0 && tau_first < 1.0))
    throw InvalidArgument("tau must lie in [0, 1), got " + std::to_string(tau_first));
  return tau_first;
}

/// Largest exposure count the subset enumeration accepts.
inline constexpr std::size_t kExactEnumerationLimit = 20;

/// V_n by explicit enumeration of all n-subsets. Exponential in n_e.
inline double v_n_exact(const TauVector& taus, std::size_t n) {
  const std::size_t ne = taus.size();
  if (ne > kExactEnumerationLimit)
    throw InvalidArgument("v_n_exact limited to " + std::to_string(kExactEnumerationLimit) +
                          " exposures; use v_n_generating");
  if (n > ne) throw InvalidArgument("n exceeds the number of exposures");
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << ne); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != n) continue;
    double term = 1.0;
    for (std::size_t i = 0; i < ne; ++i) term *= (mask >> i & 1u) ? taus[i] : 1.0 - taus[i];
    total += term;
  }
  return total;
}

/// V_0..V_{n_e} as the coefficients of prod_i ((1 - tau_i) + tau_i y).
///
/// Each factor equals (1 - tau_i)(1 + tau_i/(1 - tau_i) y), so this is the
/// generating function C * prod(1 + r_i y) with the scale C folded into the
/// factors; the recurrence only adds non-negative terms. O(n_e^2).
inline std::vector<double> v_n_generating(const TauVector& taus) {
  std::vector<double> v(taus.size() + 1, 0.0);
  v[0] = 1.0;
  std::size_t deg = 0;
  for (double t : taus.values()) {
    ++deg;
    for (std::size_t k = deg; k > 0; --k) v[k] = v[k] * (1.0 - t) + v[k - 1] * t;
    v[0] *= 1.0 - t;
  }
  return v;
}

using EnhancementFn = std::function<double(int)>;

/// sum_{n>=1} f(n) V_n, written as visibility_all + sum (f(n) - 1) V_n so
/// that f == 1 reproduces visibility_all exactly.
inline double p_general(const TauVector& taus, const EnhancementFn& f) {
  const auto v = v_n_generating(taus);
  double correction = 0.0;
  for (std::size_t n = 1; n < v.size(); ++n) {
    const double fn = f(static_cast<int>(n));
    if (!(fn >= 0.0)) throw InvalidArgument("enhancement f(" + std::to_string(n) + ") is negative");
    correction += (fn - 1.0) * v[n];
  }
  return visibility_all(taus) + correction;
}

/// Ratio of the exact response probability under f to the any-exposure
/// visibility. Close to a constant when the product-form approximation holds.
inline double f_star_ratio(const TauVector& taus, const EnhancementFn& f) {
  const double denominator = visibility_all(taus);
  if (!(denominator > 0.0)) throw InvalidArgument("f_star_ratio undefined when every tau is zero");
  return p_general(taus, f) / denominator;
}

// ---------------------------------------------------------------------------

/// Social enhancement factors F(n_e), with F(1) = 1.
class EnhancementTable {
 public:
  EnhancementTable() : values_{{1, 1.0}} {}

  explicit EnhancementTable(std::map<int, double> values, std::string cohort = "all")
      : values_(std::move(values)), cohort_(std::move(cohort)) {
    auto one = values_.find(1);
    if (one == values_.end() || one->second != 1.0)
      throw InvalidArgument("enhancement table must define F(1) = 1");
    for (const auto& [n, f] : values_) {
      if (n < 1) throw InvalidArgument("enhancement table keys start at 1");
      if (!std::isfinite(f) || f < 0.0)
        throw InvalidArgument("F(" + std::to_string(n) + ") must be finite and non-negative");
    }
  }

  /// F == 1 for n_e = 1..n_max; the no-enhancement ablation.
  static EnhancementTable ones(int n_max) {
    std::map<int, double> v;
    for (int n = 1; n <= n_max; ++n) v[n] = 1.0;
    return EnhancementTable(std::move(v));
  }

  double at(int n_e) const {
    auto it = values_.find(n_e);
    if (it == values_.end())
      throw InvalidArgument("no enhancement factor for n_e = " + std::to_string(n_e));
    return it->second;
  }

  bool contains(int n_e) const { return values_.contains(n_e); }
  int max_count() const { return values_.rbegin()->first; }
  const std::map<int, double>& values() const { return values_; }
  const std::string& cohort() const { return cohort_; }

  /// Copy extended to n_max by repeating the last factor.
  EnhancementTable saturated(int n_max) const {
    auto v = values_;
    double last = v.rbegin()->second;
    for (int n = 1; n <= n_max; ++n) {
      if (auto it = v.find(n); it != v.end())
        last = it->second;
      else
        v[n] = last;
    }
    return EnhancementTable(std::move(v), cohort_);
  }

  EnhancementFn as_function() const {
    return [this](int n) { return at(n); };
  }

 private:
  std::map<int, double> values_;
  std::string cohort_ = "all";
};

/// Everything needed to evaluate the response probability of a series.
struct ModelParams {
  Site site = Site::Digg;
  double p0 = 1.0;
  /// Natural log of the visibility floor v_min.
  double log_v_min = -19.0;
  EnhancementTable enhancement;
  SusceptibilityCurve susceptibility;
  TrfBundle trf;

  double v_min() const { return std::exp(log_v_min); }

  void validate() const {
    if (!(p0 > 0.0)) throw InvalidArgument("p0 must be positive");
    // -inf encodes a zero floor.
    if (std::isnan(log_v_min) || log_v_min > 0.0) throw InvalidArgument("log_v_min must be a log-probability");
    trf.check();
  }

  /// tau = P(n_f) T(dt, n_f).
  double tau(int n_f, Seconds dt) const {
    return susceptibility(n_f) * interpolate_trf(trf.t1, trf.t10, trf.t100, n_f, site, dt);
  }
};

inline double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

/// Twitter model: P_0 F(n_e) (1 - prod(1 - tau_i)) + v_min, with n_e the
/// exposures delivered by time t. No exposures leaves only the floor.
inline double p_twitter(const ModelParams& m, int n_f, std::span<const Seconds> exposure_times,
                        Seconds t) {
  std::vector<double> taus;
  for (Seconds ti : exposure_times) {
    if (ti > t) continue;
    taus.push_back(m.tau(n_f, t - ti));
  }
  if (taus.empty()) return clamp_probability(m.v_min());
  const int n_e = static_cast<int>(taus.size());
  const double social = visibility_all(TauVector(std::move(taus)));
  return clamp_probability(m.p0 * m.enhancement.at(n_e) * social + m.v_min());
}

/// Digg model: F'(n_e) (P'_0 P'(n_f) T'(t - t_first, n_f) + v'_min). Only
/// the first exposure sets the delay; later ones raise n_e.
inline double p_digg(const ModelParams& m, int n_f, Seconds first_exposure, int n_e, Seconds t) {
  if (t < first_exposure) throw InvalidArgument("p_digg evaluated before the first exposure");
  if (n_e < 1) throw InvalidArgument("p_digg needs n_e >= 1");
  const double tau = visibility_first(m.tau(n_f, t - first_exposure));
  return clamp_probability(m.enhancement.at(n_e) * (m.p0 * tau + m.v_min()));
}

// ---------------------------------------------------------------------------

/// Precomputed per-n_f susceptibility and interpolated TRF densities.
/// Evaluates the same quantities as ModelParams::tau without repeated
/// interpolation. Not thread-safe (lazy cache).
class ModelEvaluator {
 public:
  explicit ModelEvaluator(const ModelParams& m) : m_(m), v_min_(m.v_min()) { m.validate(); }

  const ModelParams& params() const { return m_; }
  const std::vector<Seconds>& edges() const { return m_.trf.t1.bin_edges; }
  Seconds horizon() const { return edges().back(); }
  double v_min() const { return v_min_; }

  /// Per-second tau for each TRF bin at this n_f.
  const std::vector<double>& taus_per_bin(int n_f) {
    auto it = cache_.find(n_f);
    if (it != cache_.end()) return it->second;
    auto mass = m_.trf.interpolated_mass(n_f, m_.site);
    const double p = m_.susceptibility(n_f);
    const auto& e = edges();
    for (std::size_t b = 0; b < mass.size(); ++b) mass[b] *= p / static_cast<double>(e[b + 1] - e[b]);
    return cache_.emplace(n_f, std::move(mass)).first->second;
  }

 private:
  const ModelParams& m_;
  double v_min_;
  std::unordered_map<int, std::vector<double>> cache_;
};

/// State of a series over an interval on which the model is constant.
struct HazardSegment {
  /// First second at which something changes (exclusive end).
  Seconds end = 0;
  /// Per-second response probability.
  double hazard = 0.0;
  /// Social-free visibility: tau of the first exposure (Digg) or
  /// 1 - prod(1 - tau_i) (Twitter).
  double visibility = 0.0;
  int n_e = 0;
};

inline constexpr Seconds kNever = std::numeric_limits<Seconds>::max();

/// Piecewise-constant hazard of one (user, item) pair. The hazard changes
/// only at exposure arrivals and TRF bin edges, so callers can walk whole
/// segments instead of single seconds.
class HazardTrack {
 public:
  HazardTrack(ModelEvaluator& eval, int n_f, std::span<const Seconds> exposures,
              const EnhancementTable* enhancement = nullptr)
      : eval_(eval),
        enhancement_(enhancement ? *enhancement : eval.params().enhancement),
        taus_(eval.taus_per_bin(n_f)),
        exposures_(exposures) {}

  HazardSegment at(Seconds s) const {
    HazardSegment seg;
    const auto delivered = std::upper_bound(exposures_.begin(), exposures_.end(), s);
    seg.n_e = static_cast<int>(delivered - exposures_.begin());
    seg.end = delivered == exposures_.end() ? kNever : *delivered;
    if (seg.n_e == 0) return seg;

    const auto& edges = eval_.edges();
    const auto& m = eval_.params();
    auto tau_at = [&](Seconds exposure) {
      const Seconds dt = s - exposure;
      if (dt >= edges.back()) return 0.0;
      const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), dt) -
                                              edges.begin()) - 1;
      seg.end = std::min(seg.end, exposure + edges[b + 1]);
      return taus_[b];
    };
    const double f = enhancement_.at(seg.n_e);
    if (m.site == Site::Digg) {
      seg.visibility = tau_at(exposures_.front());
      seg.hazard = clamp_probability(f * (m.p0 * seg.visibility + eval_.v_min()));
    } else {
      double log_none = 0.0;
      for (auto it = exposures_.begin(); it != delivered; ++it) log_none += std::log1p(-tau_at(*it));
      seg.visibility = -std::expm1(log_none);
      seg.hazard = clamp_probability(m.p0 * f * seg.visibility + eval_.v_min());
    }
    return seg;
  }

 private:
  ModelEvaluator& eval_;
  const EnhancementTable& enhancement_;
  const std::vector<double>& taus_;
  std::span<const Seconds> exposures_;
};

// ---------------------------------------------------------------------------

struct ExposureResponsePoint {
  long long at_risk = 0;
  long long responded = 0;
  double probability() const {
    return at_risk > 0 ? static_cast<double>(responded) / static_cast<double>(at_risk) : 0.0;
  }
};

/// Counts behind the aggregate exposure-response curve: for each n, the
/// pairs that reached n exposures while at risk and those that responded
/// before an (n+1)-th exposure arrived.
inline std::map<int, ExposureResponsePoint> exposure_response_counts(
    std::span<const ExposureSeries> series) {
  std::map<int, ExposureResponsePoint> out;
  for (const auto& s : series) {
    const int reached = s.at_risk_exposures();
    for (int n = 1; n <= reached; ++n) ++out[n].at_risk;
    if (s.responded() && reached >= 1) ++out[reached].responded;
  }
  return out;
}

/// Response probability as a function of exposure count, aggregated over
/// every user.
inline std::map<int, double> exposure_response_curve(std::span<const ExposureSeries> series) {
  std::map<int, double> curve;
  for (const auto& [n, c] : exposure_response_counts(series)) curve[n] = c.probability();
  return curve;
}

}  // namespace contagion
