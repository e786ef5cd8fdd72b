#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kgrar::io {

// Both throw Error{IoFailure}.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Splits on '\n'; a trailing newline does not produce an extra empty line.
// Carriage returns before the newline are stripped.
std::vector<std::string_view> split_lines(std::string_view contents);

}  // namespace kgrar::io
