#pragma once

#include <stdexcept>
#include <string>

namespace ulpt {

// Precondition violations on library inputs.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A protocol was asked to run with fewer users than its role assignment needs.
class InsufficientUsers : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed experiment configuration or unknown protocol name.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical self-check failed inside an oracle.
class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sample-size search exhausted its range; carries the scan trace.
class NotFound : public std::runtime_error {
public:
    NotFound(const std::string& what, std::string trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::string& trace() const noexcept { return trace_; }

private:
    std::string trace_;
};

}  // namespace ulpt
