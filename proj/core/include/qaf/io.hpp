#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qaf::io {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
double parse_double(std::string_view text);
std::size_t parse_size(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

std::string join_doubles(std::span<const double> values, char sep = ' ');
std::vector<double> split_doubles(std::string_view text, char sep = ' ');
std::string join_sizes(std::span<const std::size_t> values, char sep = ',');
std::vector<std::size_t> split_sizes(std::string_view text, char sep = ',');
std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename so readers never see partial files.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Line reader that tracks line numbers for error messages.
class LineReader {
 public:
  LineReader(std::string_view text, std::string source);

  bool done() const noexcept { return pos_ >= text_.size(); }
  std::string_view next();
  /// Reads a line of the form "<key> <rest>" and checks the key.
  std::string_view expect(std::string_view key);
  [[noreturn]] void fail(const std::string& what) const;

 private:
  std::string_view text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace qaf::io
