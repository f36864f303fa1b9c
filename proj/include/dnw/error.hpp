#pragma once

#include <stdexcept>
#include <string>

namespace dnw {

enum class ErrorKind {
    InvalidRange,
    Numeric,
    Budget,
    Contract,
    Parse,
    Config,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the core library. The C API maps `kind` onto its
/// status codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

}  // namespace dnw
