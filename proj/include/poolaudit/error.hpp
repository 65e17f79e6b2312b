#pragma once

#include <stdexcept>
#include <string>

namespace poolaudit {

// Process exit codes for each error category.
enum class ErrorKind {
    config = 2,
    fixture_missing = 3,
    io = 4,
    invariant = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
    std::string module_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string module, const std::string& message)
        : Error(ErrorKind::config, std::move(module), message) {}
};

class IoError : public Error {
public:
    IoError(std::string module, const std::string& message)
        : Error(ErrorKind::io, std::move(module), message) {}
};

class InvariantError : public Error {
public:
    InvariantError(std::string module, const std::string& message)
        : Error(ErrorKind::invariant, std::move(module), message) {}
};

class FixtureMissingError : public Error {
public:
    FixtureMissingError(const std::string& service, const std::string& key);

    const std::string& service() const noexcept { return service_; }
    const std::string& key() const noexcept { return key_; }

private:
    std::string service_;
    std::string key_;
};

// Recoverable per-line problem in a record shard; the stream counts and skips it.
class RecordError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace poolaudit
