#pragma once

// Derivative-free simplex minimization with restarts.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace contagion::optim {

struct NelderMeadOptions {
  /// Initial simplex edge, per coordinate (absolute).
  double step = 0.1;
  /// Converged when the spread of simplex values is below this.
  double f_tolerance = 1e-14;
  /// Converged when every vertex lies within this of the best (max-norm).
  double x_tolerance = 1e-10;
  int max_evaluations = 200000;
  /// Number of re-initializations around the incumbent after convergence.
  int restarts = 4;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes `f` from `start`. Non-finite values are treated as +inf, so the
/// objective can encode constraints by returning NaN or inf.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> start, const NelderMeadOptions& opt = {}) {
  const std::size_t n = start.size();
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<double> best = std::move(start);
  double best_value = eval(best);

  for (int round = 0; round <= opt.restarts; ++round) {
    std::vector<std::vector<double>> simplex(n + 1, best);
    std::vector<double> values(n + 1, best_value);
    for (std::size_t i = 0; i < n; ++i) {
      simplex[i + 1][i] += opt.step;
      values[i + 1] = eval(simplex[i + 1]);
    }
    std::vector<std::size_t> order(n + 1);
    bool converged = false;
    while (res.evaluations < opt.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
      const auto lo = order.front(), hi = order.back(), second = order[n - 1];

      double x_spread = 0.0;
      for (std::size_t v = 0; v <= n; ++v)
        for (std::size_t i = 0; i < n; ++i)
          x_spread = std::max(x_spread, std::abs(simplex[v][i] - simplex[lo][i]));
      if (std::isfinite(values[hi]) &&
          (values[hi] - values[lo] <= opt.f_tolerance * (1.0 + std::abs(values[lo])) ||
           x_spread <= opt.x_tolerance)) {
        converged = true;
        break;
      }

      std::vector<double> centroid(n, 0.0);
      for (std::size_t v = 0; v <= n; ++v)
        if (v != hi)
          for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v][i] / static_cast<double>(n);
      auto along = [&](double t) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = centroid[i] + t * (simplex[hi][i] - centroid[i]);
        return x;
      };

      auto reflected = along(-1.0);
      const double fr = eval(reflected);
      if (fr < values[lo]) {
        auto expanded = along(-2.0);
        const double fe = eval(expanded);
        if (fe < fr) {
          simplex[hi] = std::move(expanded);
          values[hi] = fe;
        } else {
          simplex[hi] = std::move(reflected);
          values[hi] = fr;
        }
        continue;
      }
      if (fr < values[second]) {
        simplex[hi] = std::move(reflected);
        values[hi] = fr;
        continue;
      }
      const bool outside = fr < values[hi];
      auto contracted = along(outside ? -0.5 : 0.5);
      const double fc = eval(contracted);
      if (fc < (outside ? fr : values[hi])) {
        simplex[hi] = std::move(contracted);
        values[hi] = fc;
        continue;
      }
      for (std::size_t v = 0; v <= n; ++v) {
        if (v == lo) continue;
        for (std::size_t i = 0; i < n; ++i) simplex[v][i] = simplex[lo][i] + 0.5 * (simplex[v][i] - simplex[lo][i]);
        values[v] = eval(simplex[v]);
      }
    }
    const auto lo = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    const bool improved = values[lo] < best_value;
    if (values[lo] <= best_value) {
      best = simplex[lo];
      best_value = values[lo];
    }
    res.converged = converged;
    if (!converged) break;
    if (round > 0 && !improved) break;
  }
  res.x = std::move(best);
  res.value = best_value;
  return res;
}

}  // namespace contagion::optim
