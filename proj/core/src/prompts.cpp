#include "kgrar/prompts.hpp"

#include <cstddef>
#include <string>
#include <utility>

#include "kgrar/error.hpp"

namespace kgrar::prompts {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kResources[];
extern const std::size_t kResourceCount;
}  // namespace detail

std::string_view resource(std::string_view name) {
  for (std::size_t i = 0; i < detail::kResourceCount; ++i)
    if (detail::kResources[i].first == name) return detail::kResources[i].second;
  throw Error(ErrorCode::InvalidArgument, "unknown prompt resource '" + std::string(name) + "'");
}

std::vector<std::string_view> resource_names() {
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i < detail::kResourceCount; ++i) out.push_back(detail::kResources[i].first);
  return out;
}

}  // namespace kgrar::prompts
