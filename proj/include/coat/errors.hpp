#pragma once

#include <stdexcept>
#include <string>

namespace coat {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or record; carries a 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " at line " + std::to_string(line) : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A domain invariant was violated (duplicate ids, out-of-space cells, misaligned tables).
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Conditioning columns are collinear or a tested column is a function of them.
class DeterministicRelationError : public Error {
public:
    using Error::Error;
};

class InsufficientSamplesError : public Error {
public:
    using Error::Error;
};

/// Failure talking to an LLM provider. `retryable` separates transient faults from auth/format errors.
class ProviderError : public Error {
public:
    ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace coat
