#pragma once

// CSV exports: forecasts.csv, calibration.csv and plot-data tables.

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "contagion/error.hpp"
#include "contagion/forecast.hpp"

namespace contagion::csv {

/// Quotes a field when it contains a delimiter, quote or line break.
inline std::string field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Shortest text that reads back to the same double.
inline std::string number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

/// Splits one CSV record. Quoted fields may contain commas and doubled quotes
/// but not line breaks.
inline std::vector<std::string> split(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  out.push_back(std::move(cur));
  return out;
}

inline constexpr const char* kForecastHeader = "user,item,window_start,predicted,outcome";
inline constexpr const char* kCalibrationHeader = "bin_lo,bin_hi,predicted_mean,observed,trials";

inline void write_forecast_row(std::ostream& out, std::string_view user, std::string_view item, Seconds start,
                               double predicted, bool responded) {
  out << field(user) << ',' << field(item) << ',' << start << ',' << number(predicted) << ','
      << (responded ? 1 : 0) << '\n';
}

inline void write_forecasts(std::ostream& out, std::span<const ForecastPoint> points) {
  out << kForecastHeader << '\n';
  for (const auto& p : points) write_forecast_row(out, p.user, p.item, p.window_start, p.predicted, p.responded);
}

/// Reads forecasts.csv. window_len is not stored and is set to `window`.
inline std::vector<ForecastPoint> read_forecasts(std::istream& in, Seconds window = kDefaultWindow) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty forecast file", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kForecastHeader) throw ParseError(std::string("expected header '") + kForecastHeader + "'", line_no);
  std::vector<ForecastPoint> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split(line, line_no);
    if (f.size() != 5) throw ParseError("expected 5 fields, got " + std::to_string(f.size()), line_no);
    ForecastPoint p;
    p.user = f[0];
    p.item = f[1];
    p.window_len = window;
    try {
      std::size_t used = 0;
      p.window_start = std::stoll(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("window_start");
      p.predicted = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("predicted");
    } catch (const std::exception&) {
      throw ParseError("malformed number", line_no);
    }
    if (!(p.predicted >= 0.0 && p.predicted <= 1.0)) throw ParseError("predicted outside [0, 1]", line_no);
    if (f[4] != "0" && f[4] != "1") throw ParseError("outcome must be 0 or 1", line_no);
    p.responded = f[4] == "1";
    out.push_back(std::move(p));
  }
  return out;
}

/// Every bin, flagged ones included; flagged bins carry no WMAP weight.
inline void write_calibration(std::ostream& out, const CalibrationReport& r) {
  out << kCalibrationHeader << '\n';
  for (const auto& b : r.bins)
    out << number(b.bin_lo) << ',' << number(b.bin_hi) << ',' << number(b.predicted_mean) << ','
        << number(b.observed) << ',' << b.trials << '\n';
}

}  // namespace contagion::csv
