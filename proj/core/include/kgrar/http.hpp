#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace kgrar::http {

struct Response {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

// One POST; throws Error{Timeout} or Error{TransportError} when no HTTP
// response arrives. Non-2xx statuses are returned, not thrown.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response post(const std::string& url, const Headers& headers, const std::string& body,
                        int timeout_ms) = 0;
};

std::shared_ptr<Transport> default_transport();

}  // namespace kgrar::http
