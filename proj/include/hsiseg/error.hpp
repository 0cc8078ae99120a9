#pragma once

#include <stdexcept>
#include <string>

namespace hsi {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag that the CLI prints as the first field of its error line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& message) : Error("argument", message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class CorruptionError : public Error {
public:
    explicit CorruptionError(const std::string& message) : Error("corruption", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

// File format errors. Each is distinct so callers can tell them apart.
class BadMagicError : public Error {
public:
    explicit BadMagicError(const std::string& message) : Error("bad-magic", message) {}
};

class TruncatedError : public Error {
public:
    explicit TruncatedError(const std::string& message) : Error("truncated", message) {}
};

class ExtentOverflowError : public Error {
public:
    explicit ExtentOverflowError(const std::string& message) : Error("extent-overflow", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

} // namespace hsi
