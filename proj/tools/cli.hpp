#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgrar::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;     // IO, provider or config failure
inline constexpr int kEmptyInput = 2;
inline constexpr int kNoVotable = 3;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgrar::cli
