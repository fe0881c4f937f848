#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace entailkg {

// Bad user-supplied data: unreadable files, malformed records, mismatched shapes.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : InputError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Binary artifact problems: wrong magic, unsupported version, truncation.
class FormatError : public InputError {
public:
    using InputError::InputError;
};

// An internal consistency check failed. Indicates a bug rather than bad input.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace entailkg
