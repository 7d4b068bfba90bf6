#include "histaid/data/table.hpp"

#include <fstream>
#include <sstream>

#include "histaid/error.hpp"

namespace histaid::data {

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name) const {
  if (auto c = column(name)) return *c;
  throw ParseError(source + ": missing required column '" + std::string(name) + "'");
}

Table parse_table(std::string_view text, char delimiter, std::string source) {
  Table table;
  table.source = std::move(source);
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool was_quoted = false;
  bool record_open = false;

  auto fail = [&](const std::string& what) {
    throw ParseError(table.source + ":" + std::to_string(record_line) + ": " + what);
  };
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (table.header.empty()) {
      table.header = std::move(record);
    } else if (!(record.size() == 1 && record[0].empty())) {
      if (record.size() != table.header.size()) {
        fail("expected " + std::to_string(table.header.size()) + " fields, found " + std::to_string(record.size()));
      }
      table.rows.push_back(std::move(record));
      table.row_lines.push_back(record_line);
    }
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!record_open) {
      record_open = true;
      record_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted) fail("quote inside an unquoted field");
      in_quotes = true;
      was_quoted = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      if (was_quoted) fail("characters after closing quote");
      field += c;
    }
  }
  if (in_quotes) fail("unterminated quoted field");
  if (record_open) end_record();
  if (table.header.empty()) throw ParseError(table.source + ": missing header row");
  return table;
}

Table read_table(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open table '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str(), delimiter, path);
}

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << delimiter;
    const auto& f = fields[i];
    if (f.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string::npos) {
      out << f;
      continue;
    }
    out << '"';
    for (char c : f) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

std::string format_table(const Table& table, char delimiter) {
  std::ostringstream out;
  write_row(out, table.header, delimiter);
  for (const auto& r : table.rows) write_row(out, r, delimiter);
  return out.str();
}

}  // namespace histaid::data
