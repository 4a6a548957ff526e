#include "polyswarm/http_client.hpp"

#include <httplib.h>

#include "polyswarm/errors.hpp"

namespace polyswarm {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

class HttplibClient final : public HttpClient {
 public:
  HttpResponse get(const std::string& url, const HttpHeaders& headers,
                   std::chrono::milliseconds timeout) override {
    auto [base, path] = split_url(url);
    httplib::Client cli(base);
    configure(cli, timeout);
    auto res = cli.Get(path, to_headers(headers));
    return unwrap(res, url);
  }

  HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers,
                    std::chrono::milliseconds timeout) override {
    auto [base, path] = split_url(url);
    httplib::Client cli(base);
    configure(cli, timeout);
    auto res = cli.Post(path, to_headers(headers), body, "application/json");
    return unwrap(res, url);
  }

 private:
  static void configure(httplib::Client& cli, std::chrono::milliseconds timeout) {
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
  }

  static httplib::Headers to_headers(const HttpHeaders& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) out.emplace(k, v);
    return out;
  }

  static HttpResponse unwrap(const httplib::Result& res, const std::string& url) {
    if (!res) {
      throw TransportError("request to " + url + " failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<HttpClient> make_http_client() { return std::make_shared<HttplibClient>(); }

}  // namespace polyswarm
