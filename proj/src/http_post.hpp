#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sqlicl::detail {

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string retry_after;  // raw header value, empty when absent
};

// POSTs a JSON body to an http:// or https:// URL. Transport failures throw
// Error(kProviderUnavailable); HTTP error statuses are returned to the caller.
HttpResponse http_post_json(const std::string& url, const std::string& body,
                            const std::vector<std::pair<std::string, std::string>>& headers, int timeout_seconds);

}  // namespace sqlicl::detail
