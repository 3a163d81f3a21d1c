#include "tomo/io.hpp"

#include "tomo/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tomo {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  if (s == "NA" || s == "NaN" || s == "nan") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

bool is_index_name(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s == "t" || s == "time" || s == "epoch" || s == "index";
}

}  // namespace

LabeledMatrix parse_csv(std::istream& in, const std::string& origin) {
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) header = split(line);
  }
  if (header.empty()) throw ValidationError(origin + ": empty CSV");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split(line));
  }

  bool labels = false;
  bool drop_index = false;
  if (!rows.empty()) {
    double probe = 0.0;
    labels = !parse_number(rows.front().front(), probe);
    // Header with one fewer cell than the data rows: R-style row names.
    if (!labels && rows.front().size() == header.size() + 1) labels = true;
  }
  if (!labels && header.size() > 1 && is_index_name(header.front())) drop_index = true;
  if (labels && rows.front().size() == header.size() + 1) header.insert(header.begin(), "");

  LabeledMatrix out;
  const std::size_t skip = (labels || drop_index) ? 1 : 0;
  out.col_names.assign(header.begin() + static_cast<std::ptrdiff_t>(skip), header.end());
  const auto cols = static_cast<Index>(out.col_names.size());
  out.values.resize(static_cast<Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size()) {
      throw ShapeMismatch(origin + ": row " + std::to_string(r + 2) + " has " + std::to_string(cells.size()) +
                          " cells, header has " + std::to_string(header.size()));
    }
    if (labels) out.row_names.push_back(cells.front());
    for (Index c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_number(cells[static_cast<std::size_t>(c) + skip], v)) {
        throw ValidationError(origin + ": non-numeric cell '" + cells[static_cast<std::size_t>(c) + skip] +
                              "' in row " + std::to_string(r + 2));
      }
      out.values(static_cast<Index>(r), c) = v;
    }
  }
  return out;
}

LabeledMatrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return parse_csv(in, path);
}

RoutingMatrix read_routing_csv(const std::string& path) {
  LabeledMatrix table = read_csv(path);
  if (table.row_names.empty()) {
    for (Index i = 0; i < table.values.rows(); ++i) table.row_names.push_back("c" + std::to_string(i));
  }
  return RoutingMatrix(std::move(table.values), std::move(table.row_names), std::move(table.col_names));
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

void write_routing_csv(const std::string& path, const RoutingMatrix& a) {
  auto out = open_output(path);
  out << "counter";
  for (const auto& name : a.route_names()) out << ',' << name;
  out << '\n';
  for (Index i = 0; i < a.counters(); ++i) {
    out << a.counter_names()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < a.routes(); ++j) out << ',' << a.entries()(i, j);
    out << '\n';
  }
}

LabeledMatrix read_series_csv(const std::string& path) {
  LabeledMatrix table = read_csv(path);
  if (table.values.rows() == 0) throw ValidationError(path + ": no epochs");
  return table;
}

void write_series_csv(const std::string& path, const Matrix& values, const std::vector<std::string>& names) {
  if (static_cast<Index>(names.size()) != values.cols()) throw ShapeMismatch("write_series_csv: name count");
  auto out = open_output(path);
  out << 't';
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (Index t = 0; t < values.rows(); ++t) {
    out << t + 1;
    for (Index j = 0; j < values.cols(); ++j) out << ',' << values(t, j);
    out << '\n';
  }
}

}  // namespace tomo
