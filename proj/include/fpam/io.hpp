#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fpam/stable_process.hpp"

namespace fpam::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& p);
// Writes through a temporary file and renames.
void write_text(const fs::path& p, const std::string& content);

// Stable textual form: two-space indentation and a trailing newline.
std::string dump_json(const nlohmann::json& j);
// Throws ConfigInvalid with the parser message on malformed input.
nlohmann::json parse_json(const std::string& text, const std::string& origin);

// %.17g; round-trips every finite double.
std::string format_double(double v);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& p);

// Text cells; numbers go through format_double so they round-trip.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(const std::vector<double>& values);
  [[nodiscard]] double number(std::size_t row, std::size_t col) const;
  [[nodiscard]] std::size_t column(const std::string& name) const;
};

std::string to_csv(const Table& t);
double parse_number(const std::string& s);
Table parse_csv(const std::string& text);

// '# {PathSpec json}' line, then "t,x1..xd" and one row per grid time.
std::string path_to_csv(const PathSpec& spec, const Path& path);
std::pair<PathSpec, Path> path_from_csv(const std::string& text);

}  // namespace fpam::io
