#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace polyswarm {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

// Minimal blocking HTTP client. Connection failures and timeouts throw
// TransportError; any HTTP status (including 5xx) is returned to the caller.
class HttpClient {
 public:
  virtual ~HttpClient() = default;
  virtual HttpResponse get(const std::string& url, const HttpHeaders& headers,
                           std::chrono::milliseconds timeout) = 0;
  virtual HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers,
                            std::chrono::milliseconds timeout) = 0;
};

std::shared_ptr<HttpClient> make_http_client();

// Splits "http://host:port/path?q" into {"http://host:port", "/path?q"}.
std::pair<std::string, std::string> split_url(const std::string& url);

}  // namespace polyswarm
