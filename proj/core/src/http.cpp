#include "kgrar/http.hpp"

#include <httplib.h>

#include "kgrar/error.hpp"

namespace kgrar::http {

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::TransportError, "malformed URL '" + url + "'");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public Transport {
 public:
  Response post(const std::string& url, const Headers& headers, const std::string& body,
                int timeout_ms) override {
    auto [base, path] = split_url(url);
    httplib::Client client(base);
    auto seconds = timeout_ms / 1000;
    auto micros = (timeout_ms % 1000) * 1000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto result = client.Post(path, h, body, "application/json");
    if (!result) {
      auto err = result.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
        throw Error(ErrorCode::Timeout, url + ": " + httplib::to_string(err));
      throw Error(ErrorCode::TransportError, url + ": " + httplib::to_string(err));
    }
    return Response{result->status, result->body};
  }
};

}  // namespace

std::shared_ptr<Transport> default_transport() {
  static auto transport = std::make_shared<HttplibTransport>();
  return transport;
}

}  // namespace kgrar::http
