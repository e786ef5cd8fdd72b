#pragma once

#include <cstdint>
#include <string>
#include <string_view>

// Small string helpers shared by every module.
namespace kgrar::text {

std::string_view trim_view(std::string_view s) noexcept;
std::string trim(std::string_view s);

// ASCII-only lower-casing; bytes outside ASCII pass through unchanged.
std::string casefold(std::string_view s);

// Trim and collapse every internal whitespace run to one space.
std::string normalize_whitespace(std::string_view s);

bool is_blank(std::string_view s) noexcept;

bool iequals(std::string_view a, std::string_view b) noexcept;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v);

}  // namespace kgrar::text
