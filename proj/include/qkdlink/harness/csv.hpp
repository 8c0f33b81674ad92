#pragma once

// Minimal CSV for the harness outputs: comma-separated, no quoting (labels
// may not contain commas), numbers in shortest round-trip form.

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdlink::harness {

/// Shortest text that parses back to exactly v.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("number: formatting failed");
  return std::string(buf, ptr);
}

inline std::string number(std::uint64_t v) { return std::to_string(v); }

inline double parse_number(const std::string& s) {
  if (s == "nan") return NAN;
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("csv: bad number '" + s + "'");
  return v;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\n") != std::string::npos)
      throw std::invalid_argument("csv: cell contains a separator: '" + cells[i] + "'");
    out << (i ? "," : "") << cells[i];
  }
  out << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

/// Header plus rows; every row must have the header's width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) throw std::invalid_argument("csv: row width differs from header");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace qkdlink::harness
