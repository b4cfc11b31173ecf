#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rrcycle::csv {

// Every CSV this project emits starts with "# schema: <name> v<version>"
// followed by a header row.
inline constexpr int kSchemaVersion = 1;

class Writer {
 public:
  Writer(std::ostream& out, std::string_view schema, const std::vector<std::string>& header);

  Writer& cell(std::string_view s);
  Writer& cell(double v);
  Writer& cell(long long v);
  Writer& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
  Writer& cell(int v) { return cell(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ostream& out_;
  bool row_started_ = false;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based physical line number of each row in the source, for error reporting.
  std::vector<std::size_t> line_numbers;

  // Index of a header column, or npos.
  std::size_t column(std::string_view name) const;
};

// Parses CSV text. Lines starting with '#' and blank lines are skipped; the
// first remaining line is the header. Double-quoted fields are supported.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

}  // namespace rrcycle::csv
