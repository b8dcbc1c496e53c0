// contagion: command-line front end for simulation, fitting and forecasting.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef CONTAGION_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "contagion/csv.hpp"
#include "contagion/events.hpp"
#include "contagion/forecast.hpp"
#include "contagion/inference.hpp"
#include "contagion/json_io.hpp"
#include "contagion/recovery.hpp"
#include "contagion/simulate.hpp"

namespace fs = std::filesystem;
using namespace contagion;
using nlohmann::json;

namespace {

struct Options {
  std::string site = "digg";
  std::string events, graph, model, config, forecasts;
  std::string out;
  std::optional<std::uint64_t> seed;
  int max_exposures = 20;
  Seconds window = kDefaultWindow;
  std::optional<Seconds> stride;
  bool ablate = false;
  std::optional<Seconds> observation_end;
  std::optional<Seconds> horizon;
  std::string split;
  std::string cohorts = "1-2,9-11,90-110";
  bool joint_e = false;
  long long max_forecast_rows = 1'000'000;
  /// Unset: the fit's own default, 10 elsewhere.
  std::optional<int> bins_per_decade;

  int bins() const { return bins_per_decade.value_or(10); }
};

// Filled in as a command runs so that a failure report can include it.
json g_context = json::object();

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw InvalidArgument("--out is required");
  const fs::path p(o.out);
  if (!fs::is_directory(p)) throw InvalidArgument("output directory '" + o.out + "' does not exist");
  return p;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgument(std::string(flag) + " is required");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw InvalidArgument("cannot write '" + p.string() + "'");
  return out;
}

struct Ingested {
  std::vector<Event> events;
  FollowerGraph graph;
  std::vector<ExposureSeries> series;
  IngestDiagnostics diag;
  Seconds last_time = 0;
};

Ingested ingest(const Options& o) {
  require(o.events, "--events");
  require(o.graph, "--graph");
  Ingested in;
  in.events = load_event_log(o.events, o.max_exposures, &in.diag);
  for (const auto& e : in.events) in.last_time = std::max(in.last_time, e.time);
  in.graph = build_graph(in.events, load_graph_edges(o.graph));
  in.series = build_series(in.events, in.graph, &in.diag);
  g_context["ingest"] = in.diag;
  spdlog::info("ingested {} events, {} users, {} series", in.events.size(), in.graph.user_count(),
               in.series.size());
  return in;
}

std::vector<ExposureSeries> select_split(std::vector<ExposureSeries> series, const std::string& split) {
  if (split == "all") return series;
  const bool want_train = split == "train";
  if (!want_train && split != "test") throw InvalidArgument("--split must be train, test or all");
  std::erase_if(series, [&](const ExposureSeries& s) { return in_training_split(s.item) != want_train; });
  g_context["split"] = {{"name", split}, {"series", series.size()}};
  return series;
}

/// End of observation: the flag, or one second past the last logged event.
Seconds observation_end(const Options& o, const Ingested& in) {
  return o.observation_end ? *o.observation_end : in.last_time + 1;
}

ModelParams load_model(const Options& o) {
  require(o.model, "--model");
  auto m = io::model_from_json(io::read_json_file(o.model));
  if (to_string(m.site) != o.site)
    throw InvalidArgument(std::string("model was fitted for ") + to_string(m.site) + " but --site is " + o.site);
  return m;
}

// --- commands ------------------------------------------------------------------

void cmd_simulate(const Options& o) {
  const auto dir = out_dir(o);
  require(o.config, "--config");
  auto truth = io::truth_from_json(io::read_json_file(o.config));
  if (o.seed) truth.rng_seed = *o.seed;
  const auto graph = generate_indexed_graph(truth.graph, truth.rng_seed);
  const auto events = simulate_cascades(truth, graph);
  const CascadeSimulator sim(truth, graph);
  spdlog::info("simulated {} events over {} items", events.size(), truth.seeding.items);
  {
    auto out = open_out(dir / "events.jsonl");
    write_event_log(out, events);
  }
  {
    auto out = open_out(dir / "graph.jsonl");
    write_graph(out, to_follower_graph(graph));
  }
  io::write_json_file((dir / "truth.json").string(), io::to_json(truth));
  io::write_json_file((dir / "true_model.json").string(), io::to_json(sim.effective_params()));
}

void cmd_fit(const Options& o) {
  const auto dir = out_dir(o);
  auto in = ingest(o);
  const auto train = select_split(std::move(in.series), o.split.empty() ? "train" : o.split);
  if (train.empty()) throw InvalidArgument("empty training split");
  FitConfig cfg;
  cfg.site = parse_site(o.site);
  cfg.horizon = o.horizon;
  cfg.observation_end = observation_end(o, in);
  cfg.max_exposures = o.max_exposures;
  if (o.bins_per_decade) cfg.bins_per_decade = *o.bins_per_decade;
  cfg.joint_e = o.joint_e;
  const auto fit = fit_model(train, cfg);
  io::write_json_file((dir / "model.json").string(), io::to_json(fit.model));

  const auto& d = fit.diagnostics;
  json residuals = json::object();
  for (const auto& [n_e, r] : d.mle_residual) residuals[std::to_string(n_e)] = r;
  json diag{{"series", d.series},
            {"responses", d.responses},
            {"susceptibility_log_rms", d.susceptibility_log_rms},
            {"scale_wmap", d.scale_wmap},
            {"scale_points", d.scale_points},
            {"mle_residual", residuals},
            {"estimated_counts", d.estimated_counts},
            {"ingest", in.diag}};
  io::write_json_file((dir / "fit_diagnostics.json").string(), diag);

  // Plot data: empirical and fitted susceptibility, and the cohort TRFs.
  {
    auto out = open_out(dir / "susceptibility.csv");
    out << "n_f,trials,responses,empirical,fitted\n";
    const auto& c = fit.model.susceptibility;
    for (const auto& [n_f, r] : c.empirical)
      out << n_f << ',' << r.trials << ',' << r.responses << ',' << csv::number(r.probability()) << ','
          << csv::number(fit.model.p0 * c(n_f)) << '\n';
  }
  {
    auto out = open_out(dir / "trf.csv");
    out << "bin_lo,bin_hi,T1,T10,T100\n";
    const auto& t = fit.model.trf;
    for (std::size_t b = 0; b < t.t1.bins(); ++b)
      out << t.t1.bin_edges[b] << ',' << t.t1.bin_edges[b + 1] << ',' << csv::number(t.t1.density_at(t.t1.bin_edges[b]))
          << ',' << csv::number(t.t10.density_at(t.t10.bin_edges[b])) << ','
          << csv::number(t.t100.density_at(t.t100.bin_edges[b])) << '\n';
  }
  std::cout << "p0 " << fit.model.p0 << "  log_v_min " << fit.model.log_v_min << "  scale WMAP " << d.scale_wmap
            << '\n';
}

std::vector<CohortRange> parse_cohorts(const std::string& s) {
  std::vector<CohortRange> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(parse_cohort(part));
  if (out.empty()) throw InvalidArgument("--cohorts lists no ranges");
  return out;
}

void cmd_enhance(const Options& o) {
  const auto dir = out_dir(o);
  const auto model = load_model(o);
  auto in = ingest(o);
  const auto series = select_split(std::move(in.series), o.split.empty() ? "all" : o.split);
  const auto cohorts = parse_cohorts(o.cohorts);
  auto unit = model;
  unit.p0 = 1.0;
  ModelEvaluator eval(unit);
  AggregateOptions agg{o.bins(), observation_end(o, in), o.max_exposures};
  const auto all = mle_enhancement(aggregate_visibility(series, eval, agg));
  const auto by_cohort = enhancement_by_cohort(series, cohorts, eval, agg);

  json doc{{"all", io::to_json(all)}, {"cohorts", json::array()}, {"skipped", by_cohort.skipped}};
  for (const auto& [label, t] : by_cohort.tables) doc["cohorts"].push_back(io::to_json(t));
  io::write_json_file((dir / "enhancement.json").string(), doc);
  for (const auto& s : by_cohort.skipped) spdlog::warn("cohort {} has no series; skipped", s);

  auto out = open_out(dir / "enhancement.csv");
  out << "cohort,n_e,F\n";
  for (const auto& [n_e, f] : all.values()) out << "all," << n_e << ',' << csv::number(f) << '\n';
  for (const auto& [label, t] : by_cohort.tables)
    for (const auto& [n_e, f] : t.values()) out << csv::field(label) << ',' << n_e << ',' << csv::number(f) << '\n';

  auto curve = open_out(dir / "exposure_response.csv");
  curve << "n_e,at_risk,responded,probability\n";
  for (const auto& [n, c] : exposure_response_counts(series))
    curve << n << ',' << c.at_risk << ',' << c.responded << ',' << csv::number(c.probability()) << '\n';
}

void write_wmap(const fs::path& dir, const CalibrationReport& r) {
  auto out = open_out(dir / "wmap.txt");
  out << csv::number(r.wmap) << '\n';
}

void cmd_forecast(const Options& o) {
  const auto dir = out_dir(o);
  auto model = load_model(o);
  auto in = ingest(o);
  const auto series = select_split(std::move(in.series), o.split.empty() ? "test" : o.split);
  if (series.empty()) throw InvalidArgument("no series to forecast in the selected split");

  ForecastOptions fo;
  fo.window = o.window;
  fo.stride = o.stride ? *o.stride : o.window;
  fo.observation_end = observation_end(o, in);
  EnhancementTable ones;
  if (o.ablate) {
    ones = EnhancementTable::ones(std::max(model.enhancement.max_count(), 1));
    fo.enhancement = &ones;
  }
  // Pass one: calibration over every window, and the window count.
  const auto full = forecast_calibration(series, model, fo, CalibrationOptions{o.bins(), 30});
  const auto& report = full.report;
  const long long windows = full.windows;
  // Pass two: rows for forecasts.csv. Past the cap, keep every k-th window
  // so the file still spans all series.
  const long long keep_every = std::max<long long>(1, (windows + o.max_forecast_rows - 1) / o.max_forecast_rows);
  ModelEvaluator eval(model);
  auto out = open_out(dir / "forecasts.csv");
  out << csv::kForecastHeader << '\n';
  long long index = 0, rows = 0;
  for (const auto& s : series)
    forecast_series(eval, s, fo, [&](Seconds start, Seconds, double p, bool hit, long long n) {
      // First k in [0, n) with (index + k) % keep_every == 0.
      for (long long k = (keep_every - index % keep_every) % keep_every; k < n; k += keep_every, ++rows)
        csv::write_forecast_row(out, s.user, s.item, start + k * fo.stride, p, hit);
      index += n;
    });
  if (keep_every > 1)
    spdlog::warn("forecasts.csv keeps one window in {} ({} rows of {} windows); calibration uses all of them", keep_every, rows,
                 windows);
  auto cal = open_out(dir / "calibration.csv");
  csv::write_calibration(cal, report);
  write_wmap(dir, report);
  std::cout << "windows " << windows << "  WMAP " << report.wmap << '\n';
}

void cmd_calibrate(const Options& o) {
  const auto dir = out_dir(o);
  require(o.forecasts, "--forecasts");
  std::ifstream in(o.forecasts);
  if (!in) throw InvalidArgument("cannot open '" + o.forecasts + "'");
  const auto points = csv::read_forecasts(in, o.window);
  const auto report = calibration(points, CalibrationOptions{o.bins(), 30});
  auto cal = open_out(dir / "calibration.csv");
  csv::write_calibration(cal, report);
  write_wmap(dir, report);
  std::cout << "points " << points.size() << "  WMAP " << report.wmap << '\n';
}

void cmd_validate(const Options& o) {
  json report = json::object();
  if (!o.events.empty()) {
    auto in = ingest(o);
    std::size_t responded = 0;
    for (const auto& s : in.series) responded += s.responded();
    report["events"] = in.events.size();
    report["users"] = in.graph.user_count();
    report["edges"] = in.graph.edges().size();
    report["series"] = in.series.size();
    report["responses"] = responded;
    report["ingest"] = in.diag;
  }
  if (!o.model.empty()) report["model"] = io::to_json(load_model(o))["site"];
  if (!o.config.empty()) report["truth_seed"] = io::truth_from_json(io::read_json_file(o.config)).rng_seed;
  if (report.empty()) throw InvalidArgument("nothing to validate: pass --events/--graph, --model or --config");
  if (!o.out.empty()) io::write_json_file((out_dir(o) / "validation.json").string(), report);
  std::cout << report.dump(2) << '\n';
}

void configure_logging() {
  auto logger = spdlog::stderr_color_st("contagion");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("CONTAGION_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept real level names.
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("CONTAGION_LOG='{}' is not a log level; using warn", env);
    else
      spdlog::set_level(level);
  }
}

void write_failure(const Options& o, const std::string& command, const std::string& what) {
  std::cerr << "error: " << what << '\n';
  if (o.out.empty() || !fs::is_directory(o.out)) return;
  json diag = g_context;
  diag["command"] = command;
  diag["status"] = "error";
  diag["error"] = what;
  try {
    io::write_json_file((fs::path(o.out) / "diagnostics.json").string(), diag);
  } catch (const std::exception& e) {
    std::cerr << "error: could not write diagnostics: " << e.what() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Social-contagion models: simulate, fit, enhance, forecast, calibrate, validate"};
  app.require_subcommand(1);

  auto site = [&](CLI::App* c) {
    c->add_option("--site", o.site, "twitter or digg")->check(CLI::IsMember({"twitter", "digg"}));
  };
  auto data = [&](CLI::App* c) {
    c->add_option("--events", o.events, "JSON-lines event log");
    c->add_option("--graph", o.graph, "JSON-lines follower graph");
    c->add_option("--max-exposures", o.max_exposures, "drop (user, item) pairs with this many exposures or more")
        ->check(CLI::PositiveNumber);
    c->add_option("--observation-end", o.observation_end, "end of observation (default: last event + 1)");
    c->add_option("--split", o.split, "train, test or all");
    c->add_option("--bins-per-decade", o.bins_per_decade, "log bins per decade")->check(CLI::PositiveNumber);
  };
  auto out = [&](CLI::App* c) { c->add_option("--out", o.out, "existing output directory"); };

  auto* sim = app.add_subcommand("simulate", "simulate cascades from a ground-truth config");
  sim->add_option("--config", o.config, "ground-truth JSON");
  sim->add_option("--seed", o.seed, "override the config seed");
  out(sim);

  auto* fit = app.add_subcommand("fit", "fit TRFs, susceptibility, P0, v_min and F(n_e) on the training split");
  site(fit);
  data(fit);
  out(fit);
  fit->add_option("--horizon", o.horizon, "TRF horizon in seconds (default: 24h Digg, 7 days Twitter)");
  fit->add_flag("--joint-e", o.joint_e, "Digg: choose E jointly with P0 and v_min by WMAP");

  auto* enh = app.add_subcommand("enhance", "per-cohort enhancement MLE and the exposure-response curve");
  site(enh);
  data(enh);
  out(enh);
  enh->add_option("--model", o.model, "model JSON supplying visibility");
  enh->add_option("--cohorts", o.cohorts, "comma-separated n_f ranges");

  auto* fc = app.add_subcommand("forecast", "window forecasts and calibration on the test split");
  site(fc);
  data(fc);
  out(fc);
  fc->add_option("--model", o.model, "model JSON");
  fc->add_option("--window", o.window, "window length in seconds")->check(CLI::PositiveNumber);
  fc->add_option("--stride", o.stride, "distance between windows (default: window)")->check(CLI::PositiveNumber);
  fc->add_flag("--ablate-enhancement", o.ablate, "forecast with F = 1");
  fc->add_option("--max-forecast-rows", o.max_forecast_rows, "cap on rows in forecasts.csv; larger runs are thinned")
      ->check(CLI::PositiveNumber);

  auto* cal = app.add_subcommand("calibrate", "calibration curve and WMAP from forecasts.csv");
  cal->add_option("--forecasts", o.forecasts, "forecasts CSV");
  cal->add_option("--window", o.window, "window length of the forecasts")->check(CLI::PositiveNumber);
  cal->add_option("--bins-per-decade", o.bins_per_decade, "log bins per decade")->check(CLI::PositiveNumber);
  out(cal);

  auto* val = app.add_subcommand("validate", "check inputs and report ingestion diagnostics");
  site(val);
  data(val);
  val->add_option("--model", o.model, "model JSON");
  val->add_option("--config", o.config, "ground-truth JSON");
  out(val);

  CLI11_PARSE(app, argc, argv);

  const auto* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "simulate") cmd_simulate(o);
    else if (name == "fit") cmd_fit(o);
    else if (name == "enhance") cmd_enhance(o);
    else if (name == "forecast") cmd_forecast(o);
    else if (name == "calibrate") cmd_calibrate(o);
    else if (name == "validate") cmd_validate(o);
  } catch (const std::exception& e) {
    write_failure(o, name, e.what());
    return 1;
  }
  return 0;
}
