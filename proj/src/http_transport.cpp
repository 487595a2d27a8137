#include <cstdlib>

#include <httplib.h>

#include "embsim/embed_client.hpp"
#include "embsim/error.hpp"

namespace embsim {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw DataError("endpoint URL lacks a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw DataError("unsupported endpoint scheme '" + scheme + "' in " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Transport make_http_transport(const ProviderConfig& cfg) {
  const Endpoint endpoint = split_url(cfg.endpoint_url);
  httplib::Headers headers{{"Accept", "application/json"}};
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw ProviderError("provider " + cfg.provider_id + ": environment variable " + cfg.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const double timeout = cfg.timeout_s;

  return [endpoint, headers, timeout](const std::string& body) {
    httplib::Client client(endpoint.origin);
    const auto secs = static_cast<time_t>(timeout);
    const auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto result = client.Post(endpoint.path, headers, body, "application/json");
    HttpResponse response;
    if (!result) {
      response.error = httplib::to_string(result.error());
      return response;
    }
    response.status = result->status;
    response.body = result->body;
    return response;
  };
}

}  // namespace embsim
