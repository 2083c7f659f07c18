#include "tibbm/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace tibbm {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw SchemaError("not a number: '" + s + "'");
  return x;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw SchemaError("no column '" + name + "'");
}

const std::string& CsvTable::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw SchemaError("no metadata '" + key + "'");
}

double CsvTable::number(std::size_t row, const std::string& col) const { return parse_double(rows.at(row).at(column(col))); }

namespace {

void put_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].find_first_of(",\n\r") != std::string::npos)
      throw std::invalid_argument("csv cell contains a separator: '" + cells[i] + "'");
    out << (i ? "," : "") << cells[i];
  }
  out << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv(std::ostream& out, const CsvTable& t) {
  out << "# schema: " << t.schema << '\n';
  for (const auto& [k, v] : t.meta) out << "# " << k << ": " << v << '\n';
  put_row(out, t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw std::invalid_argument("csv row width does not match header");
    put_row(out, r);
  }
}

std::string to_csv(const CsvTable& t) {
  std::ostringstream ss;
  write_csv(ss, t);
  return ss.str();
}

CsvTable read_csv(std::istream& in, const std::string& expected_schema, const std::vector<std::string>& expected_header) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header && line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) throw SchemaError("bad metadata line: '" + line + "'");
      std::string key = line.substr(2, colon - 2), value = line.substr(colon + 2);
      if (key == "schema") t.schema = value;
      else t.meta.emplace_back(std::move(key), std::move(value));
      continue;
    }
    if (!have_header) {
      if (t.schema != expected_schema)
        throw SchemaError("schema '" + t.schema + "' where '" + expected_schema + "' was expected");
      t.header = split(line);
      if (t.header != expected_header) throw SchemaError("header drift in " + expected_schema + ": '" + line + "'");
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw SchemaError("row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw SchemaError("no header row (expected schema " + expected_schema + ")");
  return t;
}

}  // namespace tibbm
