#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "motbounds/config.hpp"
#include "motbounds/coupling.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/measure.hpp"
#include "motbounds/perturb.hpp"

namespace motbounds::io {

/// Shortest round-trippable decimal form ("%.17g").
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

inline double number(const std::string& field, std::size_t line_no, const std::string& what) {
  if (field.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty " + what, line_no);
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": " + what + " '" + field + "' is not a finite number",
                     line_no);
  }
  return v;
}

/// Numeric rows of a CSV with the given header. Blank lines and lines
/// starting with '#' are skipped.
inline std::vector<std::vector<double>> read_table(std::istream& in, const std::vector<std::string>& header) {
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = split(t);
    if (!seen_header) {
      std::string expected;
      for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
      for (auto& f : fields) {
        std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
      }
      if (fields != header) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" + expected + "'", line_no);
      }
      seen_header = true;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::vector<double> row;
    for (std::size_t i = 0; i < fields.size(); ++i) row.push_back(number(fields[i], line_no, header[i]));
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw ParseError("missing header line", 0);
  return rows;
}

}  // namespace detail

// --- measures -----------------------------------------------------------------

/// Reads `position,weight` rows. Weights are kept as written when they sum
/// to 1; sums within 1e-6 of 1 are renormalised, anything further is rejected.
inline DiscreteMeasure read_measure(std::istream& in, const Config& cfg = {}) {
  const auto rows = detail::read_table(in, {"position", "weight"});
  if (rows.empty()) throw ParseError("measure file has no rows", 0);
  std::vector<double> atoms, weights;
  double total = 0.0;
  for (const auto& r : rows) {
    atoms.push_back(r[0]);
    weights.push_back(r[1]);
    total += r[1];
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw InvalidMeasure("weights sum to " + fmt(total) + ", not 1");
  }
  if (std::abs(total - 1.0) <= cfg.weight_sum_tol) {
    return DiscreteMeasure(std::move(atoms), std::move(weights), cfg);
  }
  return DiscreteMeasure::normalized(std::move(atoms), std::move(weights), cfg);
}

inline void write_measure(std::ostream& out, const DiscreteMeasure& m) {
  out << "position,weight\n";
  for (std::size_t i = 0; i < m.size(); ++i) out << fmt(m.atom(i)) << ',' << fmt(m.weight(i)) << '\n';
}

// --- option chains -----------------------------------------------------------

struct ChainRows {
  std::vector<double> strikes;
  std::vector<double> calls;
};

inline ChainRows read_chain(std::istream& in) {
  ChainRows c;
  for (const auto& r : detail::read_table(in, {"strike", "call_price"})) {
    c.strikes.push_back(r[0]);
    c.calls.push_back(r[1]);
  }
  return c;
}

inline void write_chain(std::ostream& out, const std::vector<double>& strikes, const std::vector<double>& calls) {
  out << "strike,call_price\n";
  for (std::size_t i = 0; i < strikes.size(); ++i) out << fmt(strikes[i]) << ',' << fmt(calls[i]) << '\n';
}

// --- couplings ---------------------------------------------------------------------

/// Rows in (X, Y) or (X, Y, Z) index order with positive mass.
inline void write_coupling(std::ostream& out, const Coupling2& c) {
  out << "x,y,mass\n";
  for (const auto& [k, w] : c.mass) {
    out << fmt(c.first_atoms[k[0]]) << ',' << fmt(c.second_atoms[k[1]]) << ',' << fmt(w) << '\n';
  }
}

inline void write_coupling(std::ostream& out, const Coupling3& c) {
  out << "x,y,z,mass\n";
  for (const auto& [k, w] : c.mass) {
    out << fmt(c.x_atoms[k[0]]) << ',' << fmt(c.y_atoms[k[1]]) << ',' << fmt(c.z_atoms[k[2]]) << ','
        << fmt(w) << '\n';
  }
}

/// Coupling file contents before they are matched to marginals.
struct CouplingRows {
  /// 2 or 3 coordinates per row.
  std::size_t dims = 0;
  std::vector<std::array<double, 3>> points;
  std::vector<double> mass;
  std::vector<std::size_t> lines;
};

/// Accepts either `x,y,mass` (a two-period plan; the second coordinate may
/// also be read as z by the caller) or `x,y,z,mass`.
inline CouplingRows read_coupling(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t line_no = 0;
  std::size_t start = 0;
  CouplingRows out;
  std::vector<std::string> header;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = detail::split(t);
    if (header.empty()) {
      for (auto& f : fields) {
        std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
      }
      if (fields == std::vector<std::string>{"x", "y", "mass"}) {
        out.dims = 2;
      } else if (fields == std::vector<std::string>{"x", "y", "z", "mass"}) {
        out.dims = 3;
      } else {
        throw ParseError("line " + std::to_string(line_no) + ": expected header 'x,y,mass' or 'x,y,z,mass'",
                         line_no);
      }
      header = fields;
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    std::array<double, 3> p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < out.dims; ++i) p[i] = detail::number(fields[i], line_no, header[i]);
    const double w = detail::number(fields[out.dims], line_no, "mass");
    if (w < 0.0) throw ParseError("line " + std::to_string(line_no) + ": negative mass", line_no);
    out.points.push_back(p);
    out.mass.push_back(w);
    out.lines.push_back(line_no);
  }
  if (header.empty()) throw ParseError("missing header line", 0);
  return out;
}

namespace detail {

inline std::size_t locate(const DiscreteMeasure& m, double v, std::size_t line, const char* axis,
                          const Config& cfg) {
  const double eps = std::max(cfg.merge_eps, 1e-9 * (1.0 + std::abs(v)));
  const std::size_t i = m.find(v, eps);
  if (i == m.size()) {
    throw ParseError("line " + std::to_string(line) + ": " + axis + "=" + fmt(v) +
                         " is not an atom of its marginal",
                     line);
  }
  return i;
}

}  // namespace detail

/// Places two-coordinate rows on the atom grids of `a` and `b`.
inline Coupling2 to_coupling2(const CouplingRows& rows, const DiscreteMeasure& a, const DiscreteMeasure& b,
                              const Config& cfg = {}) {
  if (rows.dims != 2) throw InvalidArgument("coupling file has three coordinates; expected two");
  Coupling2 c(std::vector<double>(a.atoms().begin(), a.atoms().end()),
              std::vector<double>(b.atoms().begin(), b.atoms().end()));
  for (std::size_t r = 0; r < rows.points.size(); ++r) {
    const auto i = detail::locate(a, rows.points[r][0], rows.lines[r], "x", cfg);
    const auto j = detail::locate(b, rows.points[r][1], rows.lines[r], "y", cfg);
    c.add(i, j, rows.mass[r]);
  }
  return c;
}

inline Coupling3 to_coupling3(const CouplingRows& rows, const DiscreteMeasure& mx, const DiscreteMeasure& my,
                              const DiscreteMeasure& mz, const Config& cfg = {}) {
  if (rows.dims != 3) throw InvalidArgument("coupling file has two coordinates; expected three");
  Coupling3 c(std::vector<double>(mx.atoms().begin(), mx.atoms().end()),
              std::vector<double>(my.atoms().begin(), my.atoms().end()),
              std::vector<double>(mz.atoms().begin(), mz.atoms().end()));
  for (std::size_t r = 0; r < rows.points.size(); ++r) {
    const auto i = detail::locate(mx, rows.points[r][0], rows.lines[r], "x", cfg);
    const auto j = detail::locate(my, rows.points[r][1], rows.lines[r], "y", cfg);
    const auto k = detail::locate(mz, rows.points[r][2], rows.lines[r], "z", cfg);
    c.add(i, j, k, rows.mass[r]);
  }
  return c;
}

// --- curves -------------------------------------------------------------------------

/// `epsilon,P_lower,Q_lower,P_upper,Q_upper[,model_price_p<p>...]`.
/// Failed grid points are written as "nan".
inline void write_curve(std::ostream& out, const BoundCurve& lower, const BoundCurve& upper,
                        const std::map<int, std::vector<double>>& model_prices = {}) {
  if (lower.eps_grid != upper.eps_grid) throw InvalidArgument("lower and upper curves use different grids");
  out << "epsilon,P_lower,Q_lower,P_upper,Q_upper";
  for (const auto& [p, v] : model_prices) {
    if (v.size() != lower.eps_grid.size()) throw InvalidArgument("model price column has the wrong length");
    out << ",model_price_p" << p;
  }
  out << '\n';
  auto cell = [](double v) { return std::isfinite(v) ? fmt(v) : std::string("nan"); };
  for (std::size_t t = 0; t < lower.eps_grid.size(); ++t) {
    out << fmt(lower.eps_grid[t]) << ',' << cell(lower.values[t]) << ',' << cell(lower.q_values[t]) << ','
        << cell(upper.values[t]) << ',' << cell(upper.q_values[t]);
    for (const auto& [p, v] : model_prices) out << ',' << cell(v[t]);
    out << '\n';
  }
}

}  // namespace motbounds::io
