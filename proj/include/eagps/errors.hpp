#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eagps {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text; carries the 1-based line number (0 when not line-bound).
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

// Filtering removed everything, or an input collection was empty.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite value met during optimization.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace eagps
