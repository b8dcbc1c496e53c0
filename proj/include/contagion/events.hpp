#pragma once

// Event logs, the follower graph and per-(user, item) exposure series.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "contagion/error.hpp"

namespace contagion {

using UserId = std::string;
using ItemId = std::string;
/// Whole seconds since the epoch.
using Seconds = std::int64_t;

enum class EventKind { Post, Exposure, Response };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Post: return "post";
    case EventKind::Exposure: return "exposure";
    case EventKind::Response: return "response";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  if (s == "post") return EventKind::Post;
  if (s == "exposure") return EventKind::Exposure;
  if (s == "response") return EventKind::Response;
  return std::nullopt;
}

struct Event {
  EventKind kind = EventKind::Exposure;
  UserId user;
  ItemId item;
  Seconds time = 0;
  /// Friend whose activity delivered the item; set for exposures only.
  std::optional<UserId> exposer;

  friend bool operator==(const Event&, const Event&) = default;
};

/// Who-follows-whom. An edge (follower, friend) means `follower` sees the
/// activity of `friend`; friend_count is the follower's out-degree n_f.
class FollowerGraph {
 public:
  FollowerGraph() = default;

  void add_user(const UserId& u) { friend_count_.try_emplace(u, 0); }

  /// Returns false when the edge was already present.
  bool add_edge(const UserId& follower, const UserId& friend_) {
    if (follower == friend_)
      throw InvalidArgument("self-edge rejected for user '" + follower + "'");
    add_user(follower);
    add_user(friend_);
    if (!edges_.emplace(follower, friend_).second) return false;
    ++friend_count_[follower];
    followers_[friend_].push_back(follower);
    return true;
  }

  bool has_user(const UserId& u) const { return friend_count_.contains(u); }

  int friend_count(const UserId& u) const {
    auto it = friend_count_.find(u);
    return it == friend_count_.end() ? 0 : it->second;
  }

  /// Users who follow `u` (receive exposures when `u` acts), in insertion order.
  std::span<const UserId> followers(const UserId& u) const {
    auto it = followers_.find(u);
    if (it == followers_.end()) return {};
    return it->second;
  }

  const std::set<std::pair<UserId, UserId>>& edges() const { return edges_; }
  const std::map<UserId, int>& friend_counts() const { return friend_count_; }
  std::size_t user_count() const { return friend_count_.size(); }

 private:
  std::map<UserId, int> friend_count_;
  std::set<std::pair<UserId, UserId>> edges_;
  std::map<UserId, std::vector<UserId>> followers_;
};

/// Exposures of one user to one item, with the optional response.
struct ExposureSeries {
  UserId user;
  ItemId item;
  int n_f = 0;
  /// Non-decreasing; several friends may act within the same second.
  std::vector<Seconds> exposure_times;
  std::optional<Seconds> response_time;

  Seconds first_exposure() const { return exposure_times.front(); }
  bool responded() const { return response_time.has_value(); }

  /// Number of exposures delivered at or before `t`.
  int exposures_at(Seconds t) const {
    return static_cast<int>(
        std::upper_bound(exposure_times.begin(), exposure_times.end(), t) -
        exposure_times.begin());
  }

  /// Exposures that count toward n_e while the pair is at risk. Exposures
  /// after the response are kept in exposure_times but excluded here.
  int at_risk_exposures() const {
    return response_time ? exposures_at(*response_time)
                         : static_cast<int>(exposure_times.size());
  }
};

/// Counters from ingestion. Balances as
///   exposure_events = exposures_in_series + capped_exposures + exposures_after_post
struct IngestDiagnostics {
  std::size_t exposure_events = 0;
  std::size_t capped_pairs = 0;
  std::size_t capped_exposures = 0;
  std::size_t exposures_in_series = 0;
  std::size_t exposures_after_post = 0;
  std::size_t orphan_responses = 0;
  std::size_t duplicate_responses = 0;
  std::size_t posts_as_responses = 0;

  friend void to_json(nlohmann::json& j, const IngestDiagnostics& d) {
    j = {{"exposure_events", d.exposure_events},
         {"capped_pairs", d.capped_pairs},
         {"capped_exposures", d.capped_exposures},
         {"exposures_in_series", d.exposures_in_series},
         {"exposures_after_post", d.exposures_after_post},
         {"orphan_responses", d.orphan_responses},
         {"duplicate_responses", d.duplicate_responses},
         {"posts_as_responses", d.posts_as_responses}};
  }
};

namespace detail {

inline int kind_rank(EventKind k) {
  // Within one second a post precedes exposures (a user posting an item
  // is never at risk for it), and an exposure precedes the response it may
  // trigger.
  switch (k) {
    case EventKind::Post: return 0;
    case EventKind::Exposure: return 1;
    case EventKind::Response: return 2;
  }
  return 3;
}

}  // namespace detail

/// Stable sort by (time, kind) with kind order post, exposure, response.
inline void sort_events(std::vector<Event>& events) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.time != b.time) return a.time < b.time;
    return detail::kind_rank(a.kind) < detail::kind_rank(b.kind);
  });
}

/// Drops every event of (user, item) pairs that received `max_exposures`
/// or more exposures.
inline std::vector<Event> apply_exposure_cap(std::vector<Event> events, int max_exposures,
                                             IngestDiagnostics* diag = nullptr) {
  std::map<std::pair<UserId, ItemId>, int> counts;
  for (const auto& e : events)
    if (e.kind == EventKind::Exposure) ++counts[{e.user, e.item}];
  std::set<std::pair<UserId, ItemId>> dropped;
  for (const auto& [key, n] : counts) {
    if (n >= max_exposures) {
      dropped.insert(key);
      if (diag) {
        ++diag->capped_pairs;
        diag->capped_exposures += static_cast<std::size_t>(n);
        diag->exposure_events += static_cast<std::size_t>(n);
      }
    }
  }
  if (dropped.empty()) return events;
  std::erase_if(events, [&](const Event& e) { return dropped.contains({e.user, e.item}); });
  return events;
}

inline Event parse_event_line(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(std::string("malformed JSON: ") + ex.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line_no);
  auto require_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw ParseError(std::string("missing string field '") + key + "'", line_no);
    return it->get<std::string>();
  };
  Event e;
  const std::string kind = require_string("kind");
  auto k = parse_event_kind(kind);
  if (!k) throw ParseError("unknown kind '" + kind + "'", line_no);
  e.kind = *k;
  e.user = require_string("user");
  e.item = require_string("item");
  auto t = j.find("time");
  if (t == j.end() || !t->is_number()) throw ParseError("missing numeric field 'time'", line_no);
  // Sub-second timestamps are truncated toward zero.
  e.time = t->is_number_float() ? static_cast<Seconds>(t->get<double>()) : t->get<Seconds>();
  if (e.time < 0 || (t->is_number_float() && t->get<double>() < 0))
    throw ParseError("negative time " + t->dump(), line_no);
  if (auto x = j.find("exposer"); x != j.end() && !x->is_null()) {
    if (!x->is_string()) throw ParseError("'exposer' must be a string", line_no);
    e.exposer = x->get<std::string>();
  }
  return e;
}

/// Reads a JSON-lines event log. Blank lines are skipped.
inline std::vector<Event> read_event_log(std::istream& in, int max_exposures,
                                         IngestDiagnostics* diag = nullptr) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    events.push_back(parse_event_line(line, line_no));
  }
  sort_events(events);
  return apply_exposure_cap(std::move(events), max_exposures, diag);
}

inline std::vector<Event> load_event_log(const std::string& path, int max_exposures = 20,
                                         IngestDiagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log '" + path + "'");
  return read_event_log(in, max_exposures, diag);
}

inline nlohmann::json event_to_json(const Event& e) {
  nlohmann::json j = {{"kind", to_string(e.kind)}, {"user", e.user}, {"item", e.item}, {"time", e.time}};
  if (e.exposer) j["exposer"] = *e.exposer;
  return j;
}

inline void write_event_log(std::ostream& out, std::span<const Event> events) {
  for (const auto& e : events) out << event_to_json(e).dump() << '\n';
}

inline std::vector<std::pair<UserId, UserId>> read_graph_edges(std::istream& in) {
  std::vector<std::pair<UserId, UserId>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw ParseError(std::string("malformed JSON: ") + ex.what(), line_no);
    }
    if (!j.is_object() || !j.contains("follower") || !j.contains("friend") ||
        !j["follower"].is_string() || !j["friend"].is_string())
      throw ParseError("expected {\"follower\":str,\"friend\":str}", line_no);
    edges.emplace_back(j["follower"].get<std::string>(), j["friend"].get<std::string>());
  }
  return edges;
}

inline std::vector<std::pair<UserId, UserId>> load_graph_edges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open graph file '" + path + "'");
  return read_graph_edges(in);
}

inline void write_graph(std::ostream& out, const FollowerGraph& g) {
  for (const auto& [follower, friend_] : g.edges())
    out << nlohmann::json{{"follower", follower}, {"friend", friend_}}.dump() << '\n';
}

/// Builds the follower graph. Users that appear only in events are added
/// with n_f = 0; duplicate edges collapse.
inline FollowerGraph build_graph(std::span<const Event> events,
                                 std::span<const std::pair<UserId, UserId>> follow_edges) {
  FollowerGraph g;
  for (const auto& [follower, friend_] : follow_edges) g.add_edge(follower, friend_);
  for (const auto& e : events) {
    g.add_user(e.user);
    if (e.exposer) g.add_user(*e.exposer);
  }
  return g;
}

/// Assembles one series per exposed (user, item) pair from time-sorted events.
///
/// A response needs a prior exposure; responses without one are counted as
/// orphans. A post after the first exposure counts as a response. A post
/// before any exposure removes the pair from the at-risk population, and
/// later exposures of that pair are ignored.
inline std::vector<ExposureSeries> build_series(std::span<const Event> events,
                                                const FollowerGraph& graph,
                                                IngestDiagnostics* diag = nullptr) {
  IngestDiagnostics local;
  IngestDiagnostics& d = diag ? *diag : local;

  struct Pair {
    std::optional<std::size_t> series;
    bool posted = false;
  };
  std::map<std::pair<UserId, ItemId>, Pair> pairs;
  std::vector<ExposureSeries> out;

  for (const auto& e : events) {
    auto& p = pairs[{e.user, e.item}];
    switch (e.kind) {
      case EventKind::Exposure:
        ++d.exposure_events;
        if (p.posted && !p.series) {
          ++d.exposures_after_post;
          break;
        }
        if (!p.series) {
          p.series = out.size();
          out.push_back({e.user, e.item, graph.friend_count(e.user), {}, std::nullopt});
        }
        out[*p.series].exposure_times.push_back(e.time);
        ++d.exposures_in_series;
        break;
      case EventKind::Response:
      case EventKind::Post:
        if (!p.series) {
          if (e.kind == EventKind::Response)
            ++d.orphan_responses;
          else
            p.posted = true;
          break;
        }
        if (out[*p.series].response_time) {
          if (e.kind == EventKind::Response) ++d.duplicate_responses;
          break;
        }
        out[*p.series].response_time = e.time;
        if (e.kind == EventKind::Post) ++d.posts_as_responses;
        break;
    }
  }
  std::sort(out.begin(), out.end(), [](const ExposureSeries& a, const ExposureSeries& b) {
    return std::tie(a.item, a.user) < std::tie(b.item, b.user);
  });
  return out;
}

}  // namespace contagion
