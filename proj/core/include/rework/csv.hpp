#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rework::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int find(const std::string& name) const;
};

/// Reads a comma-separated file with a header row. No quoting support; the
/// artifact formats are purely numeric apart from identifier columns.
Table read(const std::filesystem::path& path);

/// Parses a numeric cell; "nan"/"NaN"/empty parse as quiet NaN when allow_nan.
/// Throws ErrorCode::parse naming the 1-based data row and the column.
double parse_number(const std::string& cell, std::size_t row, const std::string& column,
                    bool allow_nan = false);

/// Shortest text that round-trips the double exactly.
std::string format(double value);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);
  Writer& row(const std::vector<std::string>& cells);
  std::string str() const { return text_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t width_;
  std::string text_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace rework::csv
