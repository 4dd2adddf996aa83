#pragma once

// Small text helpers shared by the schema, config, split and CLI readers.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stunt::detail {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
/// Splits on \n, dropping a trailing \r from each line.
std::vector<std::string> split_lines(std::string_view text);

/// RFC 4180-style field split: double quotes group a field, "" is a literal quote.
std::vector<std::string> split_csv_row(std::string_view line);
std::string csv_quote(std::string_view field);

/// Whole-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
/// Throws ConfigError naming `source` and the line on a malformed entry.
std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source);

}  // namespace stunt::detail
