#pragma once

// Minimal RFC-4180 reader/writer: comma separated, double-quote quoting,
// embedded quotes doubled, CRLF or LF line endings, UTF-8 passed through.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace inkstat::csv {

struct Row {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a header column, or npos.
  std::size_t column(std::string_view name) const;
};

Table parse(std::string_view text);
// Throws IoError when the file cannot be opened.
Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
void write_row(std::ostream& out, std::span<const std::string> fields);

}  // namespace inkstat::csv
