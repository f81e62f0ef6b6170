#pragma once

#include <stdexcept>
#include <string>

namespace memprobe {

// Base class for all errors raised by the toolkit. The CLI maps each
// subclass onto a process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad invocation or configuration.
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class LoadError : public DataError {
public:
    using DataError::DataError;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Training diverged or produced non-finite values.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace memprobe
