#pragma once

#include <string>
#include <string_view>

#include "retouch/errors.hpp"

namespace retouch::detail {

// "http://host:8080/v1/chat" -> origin "http://host:8080", path "/v1/chat".
struct Endpoint {
    std::string origin;
    std::string path;
};

inline Endpoint split_endpoint(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("endpoint URL needs a scheme: " + std::string(url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), ""};
    std::string path(url.substr(path_start));
    while (path.size() > 1 && path.back() == '/') path.pop_back();
    if (path == "/") path.clear();
    return {std::string(url.substr(0, path_start)), path};
}

}  // namespace retouch::detail
