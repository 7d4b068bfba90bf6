#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace histaid::data {

// Delimiter-separated table with a header row. Quoting follows RFC 4180:
// a field wrapped in double quotes may contain delimiters, newlines and
// doubled quotes ("").
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line where each row starts
  std::string source;                  // file name used in error messages

  // Column index, or nullopt when absent.
  std::optional<std::size_t> column(std::string_view name) const;
  // Column index; ParseError naming the file when absent.
  std::size_t require_column(std::string_view name) const;
};

Table parse_table(std::string_view text, char delimiter = ',', std::string source = "<memory>");
Table read_table(const std::string& path, char delimiter = ',');

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter = ',');
std::string format_table(const Table& table, char delimiter = ',');

}  // namespace histaid::data
