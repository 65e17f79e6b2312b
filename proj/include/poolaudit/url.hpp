#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace poolaudit {

struct ParsedUrl {
    std::string scheme;  // lowercased
    std::string host;    // lowercased, no port, no brackets for IPv6 literals
    std::string port;
    std::string rest;    // path + query + fragment, verbatim
};

// Parses an absolute `scheme://authority[/...]` URL. Returns nullopt when the URL is
// relative, has an empty host, or contains whitespace/control bytes.
std::optional<ParsedUrl> parse_url(std::string_view url);

// Same URL with the scheme and host lowercased; used as a canonical request form.
std::string canonical_url(const ParsedUrl& url);

std::string to_lower_ascii(std::string_view s);

// Dotted-quad IPv4 to a host-order integer.
std::optional<std::uint32_t> parse_ipv4(std::string_view s);

} // namespace poolaudit
