#pragma once

#include <stdexcept>
#include <string>

namespace genonet {

/// Base of every error raised by the library. `code()` is the stable
/// machine-readable identifier surfaced in transcripts and HTTP error bodies.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("InvalidArgument", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("IoError", message) {}
};

} // namespace genonet
