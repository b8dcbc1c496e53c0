#pragma once

// JSON documents for TRFs, susceptibility curves, enhancement tables, model
// parameters and simulation ground truth.
//
// A floor of zero (log_v_min = -inf) is written as null, since JSON has no
// infinities.

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "contagion/contagion.hpp"
#include "contagion/error.hpp"
#include "contagion/simulate.hpp"
#include "contagion/visibility.hpp"

namespace contagion::io {

using nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw InvalidArgument(where + ": missing field '" + key + "'");
  return *it;
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return field(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(where + ": bad field '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

}  // namespace detail

// --- TRF -------------------------------------------------------------------

inline json to_json(const TimeResponseFunction& t) {
  return {{"cohort", t.cohort}, {"bin_edges", t.bin_edges}, {"density", t.mass}};
}

/// "density" holds probability mass per bin and is renormalized on load.
inline TimeResponseFunction trf_from_json(const json& j, Seconds default_horizon = kDiggHorizon) {
  const std::string where = "TRF";
  if (j.contains("kind")) {
    const auto kind = detail::get<std::string>(j, "kind", where);
    if (kind != "power_decay") throw InvalidArgument(where + ": unknown kind '" + kind + "'");
    return power_decay_trf(detail::get_or<std::string>(j, "cohort", "", where),
                           detail::get_or<Seconds>(j, "horizon", default_horizon, where),
                           detail::get<double>(j, "scale", where), detail::get<double>(j, "alpha", where));
  }
  auto edges = detail::get<std::vector<Seconds>>(j, "bin_edges", where);
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw InvalidArgument(where + ": bin_edges must be ascending");
  return make_trf(detail::get_or<std::string>(j, "cohort", "", where), std::move(edges),
                  detail::get<std::vector<double>>(j, "density", where));
}

inline json to_json(const TrfBundle& b) {
  return {{"T1", to_json(b.t1)}, {"T10", to_json(b.t10)}, {"T100", to_json(b.t100)}};
}

inline TrfBundle trf_bundle_from_json(const json& j, Seconds default_horizon = kDiggHorizon) {
  const std::string where = "trf";
  TrfBundle b{trf_from_json(detail::field(j, "T1", where), default_horizon),
              trf_from_json(detail::field(j, "T10", where), default_horizon),
              trf_from_json(detail::field(j, "T100", where), default_horizon)};
  if (b.t1.cohort.empty()) b.t1.cohort = "T1";
  if (b.t10.cohort.empty()) b.t10.cohort = "T10";
  if (b.t100.cohort.empty()) b.t100.cohort = "T100";
  b.check();
  return b;
}

// --- Susceptibility ----------------------------------------------------------

inline json to_json(const SusceptibilityCurve& c) {
  json params = json::object();
  const auto names = param_names(c.form);
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = c.params.at(i);
  json j{{"form", to_string(c.form)}, {"params", params}};
  if (c.support_max > 0) j["support_max"] = c.support_max;
  if (!c.empirical.empty()) {
    json emp = json::array();
    for (const auto& [n_f, r] : c.empirical)
      emp.push_back({{"n_f", n_f}, {"responses", r.responses}, {"trials", r.trials}});
    j["empirical"] = emp;
  }
  return j;
}

/// Missing params fall back to the form's reference constants.
inline SusceptibilityCurve susceptibility_from_json(const json& j) {
  const std::string where = "susceptibility";
  SusceptibilityCurve c;
  c.form = parse_form(detail::get<std::string>(j, "form", where));
  c.params = reference_params(c.form);
  if (j.contains("params")) {
    const auto& p = j.at("params");
    const auto names = param_names(c.form);
    for (auto it = p.begin(); it != p.end(); ++it)
      if (std::find(names.begin(), names.end(), it.key()) == names.end())
        throw InvalidArgument(where + ": unknown parameter '" + it.key() + "' for form " + to_string(c.form));
    for (std::size_t i = 0; i < names.size(); ++i)
      if (p.contains(names[i])) c.params[i] = detail::get<double>(p, names[i].c_str(), where);
  }
  c.support_max = detail::get_or<int>(j, "support_max", 0, where);
  if (j.contains("empirical"))
    for (const auto& e : j.at("empirical")) {
      ResponseCounts r;
      r.responses = detail::get<long long>(e, "responses", where);
      r.trials = detail::get<long long>(e, "trials", where);
      if (r.responses < 0 || r.responses > r.trials)
        throw InvalidArgument(where + ": empirical counts need 0 <= responses <= trials");
      c.empirical[detail::get<int>(e, "n_f", where)] = r;
    }
  return c;
}

// --- Enhancement -------------------------------------------------------------

inline json to_json(const EnhancementTable& t) {
  json f = json::object();
  for (const auto& [n, v] : t.values()) f[std::to_string(n)] = v;
  return {{"cohort", t.cohort()}, {"F", f}};
}

inline EnhancementTable enhancement_from_json(const json& j) {
  const std::string where = "enhancement";
  std::map<int, double> values;
  const auto& f = detail::field(j, "F", where);
  if (!f.is_object()) throw InvalidArgument(where + ": 'F' must map n_e to factors");
  for (auto it = f.begin(); it != f.end(); ++it) {
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidArgument(where + ": key '" + it.key() + "' is not an exposure count");
    }
    if (!it.value().is_number()) throw InvalidArgument(where + ": F(" + it.key() + ") is not a number");
    values[n] = it.value().get<double>();
  }
  return EnhancementTable(std::move(values), detail::get_or<std::string>(j, "cohort", "all", where));
}

// --- Model parameters ----------------------------------------------------------

inline json to_json(const ModelParams& m) {
  json j{{"site", to_string(m.site)},
         {"p0", m.p0},
         {"log_v_min", std::isfinite(m.log_v_min) ? json(m.log_v_min) : json(nullptr)},
         {"enhancement", to_json(m.enhancement)},
         {"susceptibility", to_json(m.susceptibility)},
         {"trf", to_json(m.trf)}};
  return j;
}

inline ModelParams model_from_json(const json& j) {
  const std::string where = "model";
  ModelParams m;
  m.site = parse_site(detail::get<std::string>(j, "site", where));
  m.p0 = detail::get<double>(j, "p0", where);
  const auto& lv = detail::field(j, "log_v_min", where);
  m.log_v_min = lv.is_null() ? -std::numeric_limits<double>::infinity() : detail::get<double>(j, "log_v_min", where);
  m.enhancement = j.contains("enhancement") ? enhancement_from_json(j.at("enhancement")) : EnhancementTable();
  m.susceptibility = susceptibility_from_json(detail::field(j, "susceptibility", where));
  m.trf = trf_bundle_from_json(detail::field(j, "trf", where), default_horizon(m.site));
  m.validate();
  return m;
}

// --- Ground truth ----------------------------------------------------------------

inline json to_json(const GroundTruth& t) {
  json degree;
  if (t.graph.degree.kind == DegreeKind::Constant)
    degree = {{"kind", "constant"}, {"k", t.graph.degree.k}};
  else
    degree = {{"kind", "power_law"},
              {"exponent", t.graph.degree.exponent},
              {"k_min", t.graph.degree.k_min},
              {"k_max", t.graph.degree.k_max}};
  json cohorts = json::array();
  for (const auto& [range, table] : t.cohort_enhancement) {
    auto c = to_json(table);
    c["n_f"] = range.range_string();
    cohorts.push_back(c);
  }
  return {{"params", to_json(t.params)},
          {"graph", {{"users", t.graph.users}, {"degree", degree}}},
          {"seeding", {{"items", t.seeding.items}, {"initial_posters", t.seeding.initial_posters}}},
          {"horizon", t.horizon},
          {"seed", t.rng_seed},
          {"cohort_enhancement", cohorts}};
}

inline GroundTruth truth_from_json(const json& j) {
  const std::string where = "truth";
  GroundTruth t;
  t.params = model_from_json(detail::field(j, "params", where));
  const auto& g = detail::field(j, "graph", where);
  t.graph.users = detail::get<int>(g, "users", "graph");
  const auto& d = detail::field(g, "degree", "graph");
  const auto kind = detail::get<std::string>(d, "kind", "degree");
  if (kind == "constant") {
    t.graph.degree.kind = DegreeKind::Constant;
    t.graph.degree.k = detail::get<int>(d, "k", "degree");
  } else if (kind == "power_law") {
    t.graph.degree.kind = DegreeKind::PowerLaw;
    t.graph.degree.exponent = detail::get<double>(d, "exponent", "degree");
    t.graph.degree.k_min = detail::get_or<int>(d, "k_min", 1, "degree");
    t.graph.degree.k_max = detail::get<int>(d, "k_max", "degree");
  } else {
    throw InvalidArgument("degree: unknown kind '" + kind + "' (expected constant or power_law)");
  }
  const auto& s = detail::field(j, "seeding", where);
  t.seeding.items = detail::get<int>(s, "items", "seeding");
  t.seeding.initial_posters = detail::get<int>(s, "initial_posters", "seeding");
  t.horizon = detail::get_or<Seconds>(j, "horizon", t.params.trf.t1.horizon(), where);
  t.rng_seed = detail::get_or<std::uint64_t>(j, "seed", 1, where);
  if (j.contains("cohort_enhancement"))
    for (const auto& c : j.at("cohort_enhancement")) {
      auto range = parse_cohort(detail::get<std::string>(c, "n_f", "cohort_enhancement"));
      t.cohort_enhancement.emplace_back(range, enhancement_from_json(c));
    }
  t.validate();
  return t;
}

// --- Files -------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw InvalidArgument("write to '" + path + "' failed");
}

}  // namespace contagion::io
