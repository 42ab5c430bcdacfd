#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fmsv/errors.hpp"

namespace fmsv {

// 17 significant digits: enough for the decimal text to round-trip to the
// exact same double, which makes byte-identity of output files meaningful.
inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j > 0) out << ',';
    out << header[j];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw UsageError("csv row width " + std::to_string(row.size()) +
                       " does not match header width " + std::to_string(header.size()));
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  if (!out) throw DataError("short write to '" + path + "'");
}

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                             const Eigen::MatrixXd& m) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols())
    throw UsageError("csv header width does not match matrix columns");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j > 0) out << ',';
    out << header[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << csv_number(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("short write to '" + path + "'");
}

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x columns
};

namespace csv_detail {

inline std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace csv_detail

// strict numeric reader: every cell must parse as a finite double and every
// row must match the header width. errors name the offending cell by data
// row and column header.
inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  CsvTable table;
  table.header = csv_detail::split_line(line);
  const std::size_t width = table.header.size();
  std::vector<double> cells;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_detail::split_line(line);
    if (fields.size() != width)
      throw DataError("'" + path + "' row " + std::to_string(rows + 1) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(width));
    for (std::size_t j = 0; j < width; ++j) {
      const std::string& cell = fields[j];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      const bool parsed = end == cell.c_str() + cell.size() && !cell.empty();
      if (!parsed || !std::isfinite(v))
        throw DataError("'" + path + "' row " + std::to_string(rows + 1) + ", column '" +
                        table.header[j] + "': bad value '" + cell + "'");
      cells.push_back(v);
    }
    ++rows;
  }
  table.values.resize(rows, width);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j) table.values(i, j) = cells[i * width + j];
  return table;
}

}  // namespace fmsv
