#pragma once
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sfxb {

struct Error : std::runtime_error {
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Malformed input. The two-argument form names the offset of the first bad
// byte (binary wire formats); the one-argument form is for text documents.
struct ParseError : Error {
    explicit ParseError(const std::string &msg) : Error(msg), offset(0) {}
    ParseError(const std::string &msg, std::size_t at)
        : Error(msg + " (at byte offset " + std::to_string(at) + ")"), offset(at) {}
    std::size_t offset;
};

// A role asked for an operation the threat model forbids (e.g. server decrypt).
struct AuthorizationError : Error {
    explicit AuthorizationError(const std::string &msg) : Error(msg) {}
};

struct ConfigError : Error {
    ConfigError(const std::string &field_, const std::string &msg)
        : Error("config field '" + field_ + "': " + msg), field(field_) {}
    std::string field;
};

} // namespace sfxb
