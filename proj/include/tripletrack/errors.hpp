#pragma once

#include <stdexcept>
#include <string>

namespace tripletrack {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or tensor shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A descriptor that cannot take part in a cosine comparison (zero or non-finite).
class InvalidDescriptorError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the offending 1-based line number (0 when unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SequencingError : public Error {
public:
    using Error::Error;
};

class ExtractionError : public Error {
public:
    using Error::Error;
};

/// Loss or gradient became non-finite; parameters were rolled back.
class TrainingDivergenceError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

}  // namespace tripletrack
