#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tibbm {

/// A CSV file that does not match the expected schema or header.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to the same double; "inf", "-inf", "nan".
std::string format_double(double x);
/// Inverse of format_double. Throws SchemaError on junk.
double parse_double(const std::string& s);

/// Layout on disk:
///   # schema: <name>/<version>
///   # <key>: <value>          (seed, version, then any extras)
///   col1,col2,...
///   rows...
struct CsvTable {
  std::string schema;  // e.g. "summary/1"
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const;
  /// Throws SchemaError when the key is absent.
  [[nodiscard]] const std::string& meta_value(const std::string& key) const;
  [[nodiscard]] double number(std::size_t row, const std::string& col) const;
};

void write_csv(std::ostream& out, const CsvTable& table);
/// Writes to a string; the body (header plus rows) starts after the last '#' line.
std::string to_csv(const CsvTable& table);

/// Throws SchemaError when the schema line or the header differ from the
/// expectation, or a row has the wrong width.
CsvTable read_csv(std::istream& in, const std::string& expected_schema, const std::vector<std::string>& expected_header);

}  // namespace tibbm
