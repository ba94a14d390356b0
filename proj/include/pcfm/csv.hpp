#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcfm/model.hpp"

namespace pcfm {

// Flat CSV convention: first row header, '.' decimal, comma separator,
// values emitted with 17 significant digits so write/read round-trips.

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw std::runtime_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  CsvTable table;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
    if (!line.empty() && line.back() == ',') table.header.push_back("");
  }
  const size_t ncols = table.header.size();
  if (ncols == 0) throw std::runtime_error(path + ": header row has no columns");

  std::vector<double> data;
  size_t nrows = 0;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t col = 0;
    size_t pos = 0;
    while (true) {
      const size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                           : comma - pos);
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric cell '" +
                                 cell + "' in column " + std::to_string(col + 1));
      data.push_back(v);
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != ncols)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(ncols) + " cells, found " + std::to_string(col));
    ++nrows;
  }
  if (nrows == 0) throw std::runtime_error(path + ": no data rows");
  table.values.resize(nrows, ncols);
  for (size_t i = 0; i < nrows; ++i)
    for (size_t j = 0; j < ncols; ++j) table.values(i, j) = data[i * ncols + j];
  return table;
}

inline std::string format_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const Matrix& values) {
  if (static_cast<Index>(header.size()) != values.cols())
    throw std::invalid_argument("write_csv: header size != column count");
  std::ofstream out(path);
  if (!out.is_open()) throw std::runtime_error("cannot write '" + path + "'");
  for (size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << header[j];
  }
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << format_cell(values(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<std::string> numbered_header(const std::string& prefix, int count) {
  std::vector<std::string> h;
  h.reserve(count);
  for (int j = 1; j <= count; ++j) h.push_back(prefix + std::to_string(j));
  return h;
}

}  // namespace pcfm
