#pragma once

#include <stdexcept>
#include <string>

namespace volgan {

/// Failure category; the CLI maps each one to a distinct exit code.
enum class ErrorKind {
    usage,
    data,
    numeric,
    convergence,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// Malformed files, shape mismatches, rejected grids.
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct ParseError : DataError {
    ParseError(const std::string& what, std::size_t line)
        : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct ShapeError : DataError {
    explicit ShapeError(const std::string& what) : DataError(what) {}
};

struct StateError : DataError {
    explicit StateError(const std::string& what) : DataError(what) {}
};

struct ConfigError : DataError {
    explicit ConfigError(const std::string& what) : DataError(what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct DomainError : NumericError {
    explicit DomainError(const std::string& what) : NumericError(what) {}
};

struct InvalidPriceError : NumericError {
    explicit InvalidPriceError(const std::string& what) : NumericError(what) {}
};

struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& what) : Error(ErrorKind::convergence, what) {}
};

struct BracketError : ConvergenceError {
    explicit BracketError(const std::string& what) : ConvergenceError(what) {}
};

/// Process exit code for an error category.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::convergence: return 5;
    }
    return 1;
}

} // namespace volgan
