#include <charconv>
#include "fpam/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "fpam/error.hpp"

namespace fpam::io {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json parse_json(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigInvalid, origin + ": " + e.what());
  }
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

std::string sha256_hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& p) { return sha256_hex(read_text(p)); }

void Table::add_row(const std::vector<double>& values) {
  std::vector<std::string> row;
  row.reserve(values.size());
  for (double v : values) row.push_back(format_double(v));
  rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == name) return c;
  }
  throw Error(ErrorKind::Io, "CSV has no column '" + name + "'");
}

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += ',';
    out += t.columns[c];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += row[c];
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

double parse_number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  // subnormals come back as result_out_of_range with the value set
  if (ptr != end || s.empty() || (ec != std::errc() && !(ec == std::errc::result_out_of_range && v != 0.0 && std::isfinite(v))))
    throw Error(ErrorKind::Io, "malformed CSV number '" + s + "'");
  return v;
}

double Table::number(std::size_t row, std::size_t col) const { return parse_number(rows.at(row).at(col)); }

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line, ',');
    if (header) {
      t.columns = std::move(cells);
      header = false;
      continue;
    }
    if (cells.size() != t.columns.size()) throw Error(ErrorKind::Io, "CSV row width differs from the header");
    t.rows.push_back(std::move(cells));
  }
  if (header) throw Error(ErrorKind::Io, "CSV has no header");
  return t;
}

std::string path_to_csv(const PathSpec& spec, const Path& path) {
  Table t;
  t.columns.push_back("t");
  for (int c = 0; c < path.dim; ++c) t.columns.push_back("x" + std::to_string(c + 1));
  for (int k = 0; k < path.n_points(); ++k) {
    std::vector<double> row{path.times[k]};
    for (double v : path.at(k)) row.push_back(v);
    t.add_row(row);
  }
  return "# " + nlohmann::json(spec).dump() + "\n" + to_csv(t);
}

std::pair<PathSpec, Path> path_from_csv(const std::string& text) {
  if (text.rfind("# ", 0) != 0) throw Error(ErrorKind::Io, "path file lacks the spec line");
  const auto eol = text.find('\n');
  PathSpec spec = parse_json(text.substr(2, eol - 2), "path spec").get<PathSpec>();
  const Table t = parse_csv(text.substr(eol + 1));
  Path p;
  p.dim = static_cast<int>(t.columns.size()) - 1;
  if (p.dim != spec.dim) throw Error(ErrorKind::Io, "path columns do not match the spec dimension");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.times.push_back(t.number(r, 0));
    for (int c = 1; c <= p.dim; ++c) p.positions.push_back(t.number(r, c));
  }
  return {spec, p};
}

}  // namespace fpam::io
