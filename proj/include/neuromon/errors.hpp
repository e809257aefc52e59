#pragma once

#include <stdexcept>
#include <string>

namespace neuromon {

struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateWindowError : InputError {
    using InputError::InputError;
};

struct ShapeError : InputError {
    using InputError::InputError;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (offset " + std::to_string(offset) + ")"), offset(offset) {}
    explicit ParseError(const std::string& msg) : std::runtime_error(msg), offset(0) {}
    std::size_t offset;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace neuromon
