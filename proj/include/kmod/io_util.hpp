#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace kmod {

// Shortest decimal that parses back to the same double.
std::string format_double(double value);
// Whole-string parse; throws std::invalid_argument otherwise.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string_view trim(std::string_view s);

}  // namespace kmod
