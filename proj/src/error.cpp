#include "poolaudit/error.hpp"

namespace poolaudit {

Error::Error(ErrorKind kind, std::string module, const std::string& message)
    : std::runtime_error(module + ": " + message), kind_(kind), module_(std::move(module)) {}

FixtureMissingError::FixtureMissingError(const std::string& service, const std::string& key)
    : Error(ErrorKind::fixture_missing, "clients",
            "fixture missing for service '" + service + "', key '" + key + "'"),
      service_(service),
      key_(key) {}

} // namespace poolaudit
