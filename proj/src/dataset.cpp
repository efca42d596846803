#include "mlrtl/dataset.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mlrtl/error.hpp"
#include "mlrtl/io.hpp"

namespace mlrtl {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Dataset d;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_line(line);
    if (header) {
      if (cells.size() < 2)
        throw Error(ErrorCode::ParseError, "CSV header needs at least one feature and a label");
      d.n_features = cells.size() - 1;
      d.column_names.assign(cells.begin(), cells.end() - 1);
      header = false;
      continue;
    }
    if (cells.size() != d.n_features + 1)
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(d.n_features + 1) + " columns, got " +
                                             std::to_string(cells.size()));
    for (std::size_t j = 0; j < d.n_features; ++j)
      d.features.push_back(parse_double(cells[j], line_no));
    int label = 0;
    const std::string& ls = cells.back();
    auto [ptr, ec] = std::from_chars(ls.data(), ls.data() + ls.size(), label);
    if (ec != std::errc() || ptr != ls.data() + ls.size() || label < 0)
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": bad label '" + ls + "'");
    d.labels.push_back(label);
  }
  if (header) throw Error(ErrorCode::ParseError, "CSV is empty");
  return d;
}

Dataset read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

std::string to_csv(const Dataset& d) {
  std::ostringstream os;
  for (std::size_t j = 0; j < d.n_features; ++j)
    os << (j < d.column_names.size() ? d.column_names[j] : "x" + std::to_string(j)) << ',';
  os << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (double v : d.row(i)) {
      auto res = std::to_chars(buf, buf + sizeof buf, v);
      os.write(buf, res.ptr - buf);
      os << ',';
    }
    os << d.labels[i] << '\n';
  }
  return os.str();
}

void check_feature_count(const Dataset& d, std::size_t n_features) {
  if (d.n_features != n_features)
    throw Error(ErrorCode::InvalidArgument, "dataset has " + std::to_string(d.n_features) +
                                                " features, model expects " +
                                                std::to_string(n_features));
}

}  // namespace mlrtl
