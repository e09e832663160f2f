#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bite::io {

/// Malformed or unresolvable configuration and input files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);
void append_double(std::string& out, double value);

/// Strict parse of a complete token; throws ConfigError.
double parse_double(std::string_view token);

}  // namespace bite::io
