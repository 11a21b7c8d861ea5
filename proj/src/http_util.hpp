#pragma once

#include <string>

namespace pkground::detail {

/// "http://host:port/base" split into the client origin and a path prefix without a
/// trailing slash.
struct Endpoint {
  std::string origin;
  std::string base_path;

  std::string path(const std::string& route) const { return base_path + route; }
};

inline Endpoint parse_endpoint(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// Backend spec to base URL: "http://h:p" and "https://h:p" pass through, "http:h:p" and
/// "http:http://h:p" are unwrapped. Empty when the spec is not a remote one.
inline std::string remote_url(const std::string& spec) {
  if (spec.starts_with("http://") || spec.starts_with("https://")) return spec;
  if (!spec.starts_with("http:")) return {};
  const auto rest = spec.substr(5);
  return rest.starts_with("http://") || rest.starts_with("https://") ? rest : "http://" + rest;
}

}  // namespace pkground::detail
