#include "poolaudit/url.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>

namespace poolaudit {

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

std::optional<ParsedUrl> parse_url(std::string_view url) {
    for (unsigned char c : url) {
        if (c <= 0x20 || c == 0x7f) {
            return std::nullopt;
        }
    }
    const auto colon = url.find("://");
    if (colon == std::string_view::npos || colon == 0) {
        return std::nullopt;
    }
    const std::string_view scheme = url.substr(0, colon);
    if (!std::isalpha(static_cast<unsigned char>(scheme[0]))) {
        return std::nullopt;
    }
    for (unsigned char c : scheme) {
        if (!std::isalnum(c) && c != '+' && c != '-' && c != '.') {
            return std::nullopt;
        }
    }

    std::string_view after = url.substr(colon + 3);
    const auto auth_end = after.find_first_of("/?#");
    std::string_view authority = after.substr(0, auth_end);
    std::string_view rest = auth_end == std::string_view::npos ? std::string_view{} : after.substr(auth_end);

    if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
        authority = authority.substr(at + 1);
    }

    std::string_view host;
    std::string_view port;
    if (!authority.empty() && authority.front() == '[') {
        const auto close = authority.find(']');
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        host = authority.substr(1, close - 1);
        std::string_view tail = authority.substr(close + 1);
        if (!tail.empty()) {
            if (tail.front() != ':') {
                return std::nullopt;
            }
            port = tail.substr(1);
        }
    } else {
        const auto pc = authority.rfind(':');
        host = authority.substr(0, pc);
        if (pc != std::string_view::npos) {
            port = authority.substr(pc + 1);
        }
    }
    for (unsigned char c : port) {
        if (!std::isdigit(c)) {
            return std::nullopt;
        }
    }
    while (!host.empty() && host.back() == '.') {
        host.remove_suffix(1);
    }
    if (host.empty()) {
        return std::nullopt;
    }
    for (unsigned char c : host) {
        if (c == '/' || c == '\\' || c == '%' || c == '<' || c == '>' || c == '"') {
            return std::nullopt;
        }
    }

    ParsedUrl out;
    out.scheme = to_lower_ascii(scheme);
    out.host = to_lower_ascii(host);
    out.port = std::string(port);
    out.rest = std::string(rest);
    return out;
}

std::string canonical_url(const ParsedUrl& url) {
    std::string out = url.scheme + "://";
    if (url.host.find(':') != std::string::npos) {
        out += "[" + url.host + "]";
    } else {
        out += url.host;
    }
    if (!url.port.empty()) {
        out += ":" + url.port;
    }
    out += url.rest.empty() ? "/" : url.rest;
    return out;
}

std::optional<std::uint32_t> parse_ipv4(std::string_view s) {
    std::uint32_t value = 0;
    int parts = 0;
    while (parts < 4) {
        unsigned octet = 0;
        const char* begin = s.data();
        const char* end = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(begin, end, octet);
        if (ec != std::errc{} || ptr == begin || octet > 255 || ptr - begin > 3) {
            return std::nullopt;
        }
        value = (value << 8) | octet;
        ++parts;
        s.remove_prefix(static_cast<std::size_t>(ptr - begin));
        if (parts < 4) {
            if (s.empty() || s.front() != '.') {
                return std::nullopt;
            }
            s.remove_prefix(1);
        }
    }
    if (!s.empty()) {
        return std::nullopt;
    }
    return value;
}

} // namespace poolaudit
