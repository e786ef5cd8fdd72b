#pragma once

#include <string_view>
#include <vector>

// Prompt texts compiled in from core/resources/prompts/<version>/.
namespace kgrar::prompts {

inline constexpr std::string_view kVersion = "v1";

// Resource by file stem ("socratic_teacher", "reasoner", ...). Throws
// InvalidArgument for an unknown name.
std::string_view resource(std::string_view name);

std::vector<std::string_view> resource_names();

}  // namespace kgrar::prompts
