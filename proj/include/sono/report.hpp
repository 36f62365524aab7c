#pragma once
// CSV and SVG artifacts of a scoring run.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sono/csv.hpp"
#include "sono/dataset.hpp"
#include "sono/scoring.hpp"

namespace sono::report {

/// Shortest round-trip representation of a double.
inline std::string number(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_scores(std::ostream& out, const ScoreReport& rep) {
  csv::write_row(out, {"row", "score", "depth"});
  for (std::size_t i = 0; i < rep.scores.size(); ++i)
    csv::write_row(out, {std::to_string(i + 1), number(rep.scores[i]), number(rep.depths[i])});
}

inline void write_contributions(std::ostream& out, const ScoreReport& rep, const Dataset& ds) {
  std::vector<std::string> header{"row"};
  header.insert(header.end(), ds.variable_names().begin(), ds.variable_names().end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < rep.scores.size(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1)};
    for (std::size_t j = 0; j < rep.p; ++j) row.push_back(number(rep.contribution(i, j)));
    csv::write_row(out, row);
  }
}

/// One line per flagged record: row, itemset, length, support, sigma, implied.
inline void write_flags(std::ostream& out, const FlagSet& flags, const Dataset& ds) {
  csv::write_row(out, {"row", "itemset", "length", "support", "sigma", "implied"});
  for (std::size_t i = 0; i < flags.rows.size(); ++i)
    for (const auto& rec : flags.rows[i])
      csv::write_row(out, {std::to_string(i + 1), rec.itemset.to_string(&ds), std::to_string(rec.length()),
                           std::to_string(rec.support), number(rec.sigma), rec.implied ? "1" : "0"});
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::vector<double> ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= target) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(t);
  return out;
}

}  // namespace detail

/// Score against depth for the rows with a non-zero score.
inline void write_score_vs_depth_svg(std::ostream& out, const ScoreReport& rep, const std::string& title = "") {
  const double width = 640, height = 480, left = 70, right = 20, top = 40, bottom = 60;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < rep.scores.size(); ++i)
    if (rep.scores[i] > 0.0) pts.emplace_back(rep.depths[i], rep.scores[i]);

  double x_lo = 1.0, x_hi = std::max(2.0, static_cast<double>(rep.maxlen));
  double y_lo = 0.0, y_hi = 1.0;
  for (const auto& [x, y] : pts) {
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_hi = std::max(y_hi, y);
  }
  y_hi *= 1.05;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return top + ph - (y - y_lo) / (y_hi - y_lo) * ph; };
  auto f = [](double v) { return number(std::round(v * 100.0) / 100.0); };

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
        << detail::xml_escape(title) << "</text>\n";
  out << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  for (double t : detail::ticks(x_lo, x_hi))
    out << "<line x1=\"" << f(sx(t)) << "\" y1=\"" << top + ph << "\" x2=\"" << f(sx(t)) << "\" y2=\"" << top + ph + 5
        << "\"/>\n";
  for (double t : detail::ticks(y_lo, y_hi))
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << f(sy(t)) << "\" x2=\"" << left << "\" y2=\"" << f(sy(t))
        << "\"/>\n";
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (double t : detail::ticks(x_lo, x_hi))
    out << "<text x=\"" << f(sx(t)) << "\" y=\"" << top + ph + 20 << "\" text-anchor=\"middle\">" << number(t)
        << "</text>\n";
  for (double t : detail::ticks(y_lo, y_hi))
    out << "<text x=\"" << left - 8 << "\" y=\"" << f(sy(t) + 4) << "\" text-anchor=\"end\">" << number(t)
        << "</text>\n";
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\" font-size=\"14\">Depth</text>\n"
      << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << top + ph / 2 << ")\">Score</text>\n</g>\n"
      << "<g fill=\"steelblue\" fill-opacity=\"0.6\">\n";
  for (const auto& [x, y] : pts) out << "<circle cx=\"" << f(sx(x)) << "\" cy=\"" << f(sy(y)) << "\" r=\"3\"/>\n";
  out << "</g>\n</svg>\n";
}

}  // namespace sono::report
