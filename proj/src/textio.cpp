#include "specaug/textio.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

#include "specaug/errors.hpp"

namespace specaug::textio {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string LineReader::next(std::string_view expecting) {
  std::string line;
  if (!try_next(line)) {
    throw ParseError(source_, line_no_ + 1,
                     "unexpected end of file, expected " + std::string(expecting));
  }
  return line;
}

bool LineReader::try_next(std::string& line) {
  if (!std::getline(in_, line)) return false;
  ++line_no_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

bool LineReader::at_end() {
  return in_.peek() == std::char_traits<char>::eof();
}

void LineReader::fail(const std::string& what) const {
  throw ParseError(source_, line_no_, what);
}

double LineReader::to_double(std::string_view token) const {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail("invalid number '" + std::string(token) + "'");
  }
  return v;
}

std::size_t LineReader::to_count(std::string_view token) const {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail("invalid count '" + std::string(token) + "'");
  }
  return v;
}

long long LineReader::to_int(std::string_view token) const {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    fail("invalid integer '" + std::string(token) + "'");
  }
  return v;
}

void write_tag(std::ostream& out, std::string_view kind) {
  out << "specaug-" << kind << " v" << kFormatVersion << '\n';
}

void expect_tag(LineReader& reader, std::string_view kind) {
  const std::string line = reader.next("format tag");
  const std::string want = "specaug-" + std::string(kind) + " v" + std::to_string(kFormatVersion);
  if (line != want) reader.fail("expected format tag '" + want + "', found '" + line + "'");
}

std::string peek_kind(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::getline(in, line);
  const auto tokens = split_ws(line);
  if (tokens.size() != 2 || !tokens[0].starts_with("specaug-")) return "";
  return std::string(tokens[0].substr(8));
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace specaug::textio
