#pragma once

// Synthetic follower graphs and cascades with known ground truth.

#include <cmath>
#include <cstdint>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "contagion/contagion.hpp"
#include "contagion/error.hpp"
#include "contagion/events.hpp"
#include "contagion/rng.hpp"

namespace contagion {

enum class DegreeKind { Constant, PowerLaw };

/// Distribution of friend counts (out-degrees).
struct DegreeSpec {
  DegreeKind kind = DegreeKind::Constant;
  int k = 3;
  double exponent = 2.2;
  int k_min = 1;
  int k_max = 100;
};

struct GraphSpec {
  int users = 100;
  DegreeSpec degree;
};

struct Seeding {
  int items = 1;
  int initial_posters = 1;
};

struct GroundTruth {
  ModelParams params;
  GraphSpec graph;
  Seeding seeding;
  Seconds horizon = kDiggHorizon;
  std::uint64_t rng_seed = 1;
  /// Cohort-specific enhancement overriding params.enhancement for users
  /// whose n_f falls in the range.
  std::vector<std::pair<CohortRange, EnhancementTable>> cohort_enhancement;

  void validate() const {
    if (graph.users <= 0 || seeding.items <= 0 || seeding.initial_posters <= 0)
      throw InvalidArgument("ground truth counts must be positive");
    if (seeding.initial_posters > graph.users)
      throw InvalidArgument("more initial posters than users");
    if (horizon < 1) throw InvalidArgument("horizon must be at least one second");
    params.validate();
  }
};

inline std::string user_name(int i) { return "u" + std::to_string(i); }
inline std::string item_name(int i) { return "i" + std::to_string(i); }

/// Graph in index form: friends[u] are the users u follows.
struct IndexedGraph {
  std::vector<std::vector<int>> friends;
  std::vector<std::vector<int>> followers;

  int size() const { return static_cast<int>(friends.size()); }
  int friend_count(int u) const { return static_cast<int>(friends[u].size()); }
};

/// Out-degree probabilities for a discrete power law on [k_min, k_max].
inline std::vector<double> power_law_cdf(double exponent, int k_min, int k_max) {
  std::vector<double> cdf;
  double acc = 0.0;
  for (int k = k_min; k <= k_max; ++k) {
    acc += std::pow(static_cast<double>(k), -exponent);
    cdf.push_back(acc);
  }
  return cdf;
}

/// Each user draws a friend count from the degree spec and follows that
/// many distinct other users chosen uniformly. Deterministic per seed.
inline IndexedGraph generate_indexed_graph(const GraphSpec& spec, std::uint64_t seed) {
  const int n = spec.users;
  const auto& d = spec.degree;
  if (n < 2) throw InvalidArgument("graph needs at least two users");
  if (d.kind == DegreeKind::Constant && (d.k < 0 || d.k >= n))
    throw InvalidArgument("constant degree " + std::to_string(d.k) + " infeasible for " + std::to_string(n) +
                          " users");
  if (d.kind == DegreeKind::PowerLaw && (d.k_min < 1 || d.k_max < d.k_min || d.k_max >= n || d.exponent <= 0.0))
    throw InvalidArgument("power-law degree range [" + std::to_string(d.k_min) + ", " + std::to_string(d.k_max) +
                          "] infeasible for " + std::to_string(n) + " users");

  rng::Engine eng(rng::derive_seed(seed, 0x67726170ULL));
  std::vector<double> cdf;
  if (d.kind == DegreeKind::PowerLaw) cdf = power_law_cdf(d.exponent, d.k_min, d.k_max);

  IndexedGraph g;
  g.friends.resize(n);
  g.followers.resize(n);
  std::unordered_set<int> chosen;
  for (int u = 0; u < n; ++u) {
    const int k = d.kind == DegreeKind::Constant ? d.k : d.k_min + static_cast<int>(rng::draw_from_cdf(eng, cdf));
    chosen.clear();
    while (static_cast<int>(chosen.size()) < k) {
      int v = static_cast<int>(rng::uniform_index(eng, static_cast<std::uint64_t>(n - 1)));
      if (v >= u) ++v;
      if (chosen.insert(v).second) g.friends[u].push_back(v);
    }
  }
  for (int u = 0; u < n; ++u)
    for (int v : g.friends[u]) g.followers[v].push_back(u);
  return g;
}

inline FollowerGraph to_follower_graph(const IndexedGraph& g) {
  FollowerGraph out;
  for (int u = 0; u < g.size(); ++u) {
    out.add_user(user_name(u));
    for (int v : g.friends[u]) out.add_edge(user_name(u), user_name(v));
  }
  return out;
}

inline FollowerGraph generate_graph(const GraphSpec& spec, std::uint64_t seed) {
  return to_follower_graph(generate_indexed_graph(spec, seed));
}

namespace detail {

/// Event-driven cascade of one item. Per-second Bernoulli draws are sampled
/// segment by segment as geometric waiting times; a new exposure re-draws
/// the pending response from its arrival second.
class ItemCascade {
 public:
  ItemCascade(const GroundTruth& truth, const IndexedGraph& g, ModelEvaluator& eval,
              const std::vector<const EnhancementTable*>& enhancement_by_user, int item,
              std::vector<Event>& out)
      : truth_(truth),
        g_(g),
        eval_(eval),
        enhancement_(enhancement_by_user),
        item_(item_name(item)),
        out_(out),
        eng_(rng::derive_seed(truth.rng_seed, static_cast<std::uint64_t>(item) + 1)) {}

  void run() {
    std::unordered_set<int> posters;
    while (static_cast<int>(posters.size()) < truth_.seeding.initial_posters)
      posters.insert(static_cast<int>(rng::uniform_index(eng_, static_cast<std::uint64_t>(g_.size()))));
    std::vector<int> ordered(posters.begin(), posters.end());
    std::sort(ordered.begin(), ordered.end());
    for (int p : ordered) state_[p].done = true;
    for (int p : ordered) {
      out_.push_back({EventKind::Post, user_name(p), item_, 0, std::nullopt});
      broadcast(p, 0);
    }
    while (!queue_.empty()) {
      const auto next = queue_.top();
      queue_.pop();
      auto& st = state_[next.user];
      if (st.done || st.version != next.version) continue;
      st.done = true;
      out_.push_back({EventKind::Response, user_name(next.user), item_, next.time, std::nullopt});
      broadcast(next.user, next.time);
    }
  }

 private:
  struct UserState {
    std::vector<Seconds> exposures;
    bool done = false;
    std::uint32_t version = 0;
  };
  struct Scheduled {
    Seconds time;
    std::uint64_t seq;
    int user;
    std::uint32_t version;
    bool operator>(const Scheduled& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
  };

  void broadcast(int from, Seconds t) {
    for (int f : g_.followers[from]) {
      out_.push_back({EventKind::Exposure, user_name(f), item_, t, user_name(from)});
      auto& st = state_[f];
      if (st.done) continue;
      st.exposures.push_back(t);
      ++st.version;
      if (auto r = draw_response(f, st, t)) queue_.push({*r, seq_++, f, st.version});
    }
  }

  std::optional<Seconds> draw_response(int user, const UserState& st, Seconds from) {
    HazardTrack track(eval_, g_.friend_count(user), st.exposures, enhancement_[user]);
    for (Seconds s = from; s < truth_.horizon;) {
      const auto seg = track.at(s);
      const Seconds end = std::min(seg.end, truth_.horizon);
      const auto wait = rng::geometric_failures(eng_, seg.hazard);
      if (wait < end - s) return s + wait;
      s = end;
    }
    return std::nullopt;
  }

  const GroundTruth& truth_;
  const IndexedGraph& g_;
  ModelEvaluator& eval_;
  const std::vector<const EnhancementTable*>& enhancement_;
  std::string item_;
  std::vector<Event>& out_;
  rng::Engine eng_;
  std::unordered_map<int, UserState> state_;
  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
};

}  // namespace detail

/// Per-item cascade generator over a fixed graph. Seed posters act at
/// t = 0; each response exposes all of the responder's followers in the same
/// second. Exposure counts beyond the enhancement table reuse its last
/// factor. Items are independent and may be generated in any order.
class CascadeSimulator {
 public:
  CascadeSimulator(const GroundTruth& truth, const IndexedGraph& graph)
      : truth_((truth.validate(), truth)), graph_(graph), eval_(truth_.params) {
    int max_degree = 1;
    for (int u = 0; u < graph.size(); ++u) max_degree = std::max(max_degree, graph.friend_count(u));
    const int n_max = max_degree + truth.seeding.initial_posters;
    base_ = truth.params.enhancement.saturated(std::max(n_max, truth.params.enhancement.max_count()));
    for (const auto& [_, t] : truth.cohort_enhancement)
      cohort_tables_.push_back(t.saturated(std::max(n_max, t.max_count())));
    per_user_.assign(graph.size(), &base_);
    for (int u = 0; u < graph.size(); ++u)
      for (std::size_t c = 0; c < truth.cohort_enhancement.size(); ++c)
        if (truth.cohort_enhancement[c].first.contains(graph.friend_count(u))) per_user_[u] = &cohort_tables_[c];
  }

  CascadeSimulator(const CascadeSimulator&) = delete;
  CascadeSimulator& operator=(const CascadeSimulator&) = delete;

  int items() const { return truth_.seeding.items; }

  /// The truth's parameters with the enhancement table as simulated,
  /// i.e. saturated to the largest reachable exposure count.
  ModelParams effective_params() const {
    auto m = truth_.params;
    m.enhancement = base_;
    return m;
  }

  /// Time-sorted events of one item.
  std::vector<Event> item(int i) {
    std::vector<Event> events;
    detail::ItemCascade(truth_, graph_, eval_, per_user_, i, events).run();
    sort_events(events);
    return events;
  }

 private:
  GroundTruth truth_;
  const IndexedGraph& graph_;
  ModelEvaluator eval_;
  EnhancementTable base_;
  std::vector<EnhancementTable> cohort_tables_;
  std::vector<const EnhancementTable*> per_user_;
};

/// Simulates every item and returns one time-sorted event log.
inline std::vector<Event> simulate_cascades(const GroundTruth& truth, const IndexedGraph& graph) {
  CascadeSimulator sim(truth, graph);
  std::vector<Event> events;
  for (int i = 0; i < sim.items(); ++i) {
    auto e = sim.item(i);
    events.insert(events.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
  }
  sort_events(events);
  return events;
}

inline std::vector<Event> simulate_cascades(const GroundTruth& truth) {
  return simulate_cascades(truth, generate_indexed_graph(truth.graph, truth.rng_seed));
}

}  // namespace contagion
