#pragma once

#include <stdexcept>
#include <string>

namespace pnsim {

// Bad input data or parameters. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An observable that is not defined for the given state (e.g. g2 of vacuum).
class UndefinedObservableError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Requested operation is outside what the routine supports (mixed input to the
// brute-force splitter, cutoff too large for a closed form, ...).
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Time integration failed its trace check.
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Emission model predicts a negative vacuum population.
class TruncationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Measured (v1, v2, g2) admit no physical state. CLI exit code 3.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fringe contrast too small to map intensities to phases.
class InsufficientContrastError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace pnsim
