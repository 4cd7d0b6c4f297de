#include "rework/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rework/error.hpp"

namespace rework::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == ' ' || c.back() == '\r')) c.pop_back();
    std::size_t lead = 0;
    while (lead < c.size() && c[lead] == ' ') ++lead;
    c.erase(0, lead);
  }
  return cells;
}

}  // namespace

int Table::find(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::schema, "empty file " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  table.header = split(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::parse, "row " + std::to_string(row) + ": expected " +
                                        std::to_string(table.header.size()) + " cells, found " +
                                        std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column,
                    bool allow_nan) {
  if (allow_nan && (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA")) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || (!allow_nan && std::isnan(value))) {
    throw Error(ErrorCode::parse, "row " + std::to_string(row) + ", column '" + column +
                                      "': not a number: '" + cell + "'");
  }
  return value;
}

std::string format(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

Writer::Writer(std::vector<std::string> header) : width_(header.size()) { row(header); }

Writer& Writer::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw Error(ErrorCode::shape, "csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
  return *this;
}

void Writer::save(const std::filesystem::path& path) const { write_text(path, text_); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rework::csv
