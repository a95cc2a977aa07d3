#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "ccsec/core.hpp"

namespace ccsec {

// Minimal CSV support for the dialect used throughout: comma separated,
// header row required, UTF-8, '.' decimal, no quoting.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index find(const std::string& column) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == column) return static_cast<Index>(j);
    throw error("csv", "missing column '" + column + "'");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  return out;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw error("csv", "empty input");
  table.header = detail::split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != table.header.size())
      throw error("csv", "line " + std::to_string(lineno) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw error("csv", "cannot open '" + path + "'");
  return read_csv(is);
}

inline double parse_double(const std::string& field, const std::string& where) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw error("csv", "non-numeric cell at " + where + ": '" + field + "'");
  return value;
}

/// %.17g: round-trips every double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ccsec
