#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pwrap {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

class InvalidTlp : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "InvalidTlp"; }
};

class Truncated : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "Truncated"; }
};

class MalformedHeader : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "MalformedHeader"; }
};

class IndexOutOfRange : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "IndexOutOfRange"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ConfigError"; }
};

class UnknownTag : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "UnknownTag"; }
};

class InvariantViolation : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "InvariantViolation"; }
};

// Scenario problems are configuration errors too.
class ParseError : public ConfigError {
public:
    ParseError(std::size_t line, const std::string& msg)
        : ConfigError("line " + std::to_string(line) + ": " + msg), line_(line) {}
    const char* kind() const noexcept override { return "ParseError"; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public ConfigError {
public:
    ValidationError(std::string key, const std::string& msg)
        : ConfigError(key + ": " + msg), key_(std::move(key)) {}
    const char* kind() const noexcept override { return "ValidationError"; }
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace pwrap
