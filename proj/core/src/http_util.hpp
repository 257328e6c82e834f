#pragma once

#include <chrono>
#include <string>

namespace mghft::detail {

struct HttpResponse {
  int status = 0;  // 0 when the request never reached the server
  std::string body;
  std::string error;
};

/// POSTs a JSON body to an absolute http:// or https:// URL.
HttpResponse post_json(const std::string& url, const std::string& body, const std::string& api_key,
                       std::chrono::seconds timeout);

}  // namespace mghft::detail
