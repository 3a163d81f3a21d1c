#pragma once

#include "tomo/common.hpp"
#include "tomo/network.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace tomo {

/// A numeric table with optional row labels and column names.
struct LabeledMatrix {
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;
  Matrix values;
};

/// Reads a comma-separated numeric table with a header row.
///
/// A leading label column is detected when the first data cell is not a
/// number. A leading column named t, time, epoch or index is treated as an
/// index column and dropped. Quotes around cells are stripped.
LabeledMatrix read_csv(const std::string& path);
LabeledMatrix parse_csv(std::istream& in, const std::string& origin = "<stream>");

/// Routing matrix CSV: header of route names, one row per counter with the
/// counter name in the first column.
RoutingMatrix read_routing_csv(const std::string& path);
void write_routing_csv(const std::string& path, const RoutingMatrix& a);

/// Time series CSV: header of column names, one row per epoch, optional
/// leading index column.
LabeledMatrix read_series_csv(const std::string& path);
void write_series_csv(const std::string& path, const Matrix& values, const std::vector<std::string>& names);

/// Opens `path` for writing; throws ValidationError when it cannot.
std::ofstream open_output(const std::string& path);

}  // namespace tomo
