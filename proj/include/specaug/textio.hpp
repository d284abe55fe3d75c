#pragma once

// Shared helpers for the line-oriented text artifacts.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace specaug::textio {

// 17 significant digits: enough for an exact double round trip.
std::string format_double(double v);

std::vector<std::string> split_ws(std::string_view line);

// Reads lines while tracking the 1-based line number for error messages.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next line, or throws ParseError("unexpected end of file") naming the
  // line that was expected.
  std::string next(std::string_view expecting);
  bool try_next(std::string& line);
  bool at_end();

  std::size_t line_number() const { return line_no_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const;

  double to_double(std::string_view token) const;
  std::size_t to_count(std::string_view token) const;
  long long to_int(std::string_view token) const;

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

// Every artifact file starts with `specaug-<kind> v<version>`.
inline constexpr int kFormatVersion = 1;
void write_tag(std::ostream& out, std::string_view kind);
void expect_tag(LineReader& reader, std::string_view kind);
// Reads the first line of a file and returns its kind ("" if untagged).
std::string peek_kind(const std::filesystem::path& path);

// Throws MissingArtifact when the file does not exist.
std::ifstream open_input(const std::filesystem::path& path);
// Creates parent directories as needed.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace specaug::textio
