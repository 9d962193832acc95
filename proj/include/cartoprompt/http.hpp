#pragma once

// Thin client-side wrapper over cpp-httplib that maps transport failures onto the
// library's error types.

#include <chrono>
#include <string>

#include "cartoprompt/detail/httplib.hpp"

#include "cartoprompt/errors.hpp"

namespace cartoprompt::http {

struct Url {
  std::string scheme_host_port;  // "https://host:443"
  std::string path;              // "/v1/chat/completions"
};

inline Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL without scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct Response {
  int status = 0;
  std::string body;
  httplib::Headers headers;
};

struct RequestOptions {
  std::chrono::milliseconds timeout{30000};
  httplib::Headers headers;
};

inline Response post(const std::string& url, const std::string& body, const std::string& content_type,
                     const RequestOptions& opts = {}) {
  const Url u = split_url(url);
  httplib::Client cli(u.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  auto res = cli.Post(u.path, opts.headers, body, content_type);
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
      throw TimeoutError("request to " + url + " timed out or was cut off: " + httplib::to_string(err));
    throw TransportError("request to " + url + " failed: " + httplib::to_string(err), 0);
  }
  return {res->status, res->body, res->headers};
}

}  // namespace cartoprompt::http
