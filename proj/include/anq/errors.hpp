#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace anq {

/// Bad argument, malformed config, dimension mismatch.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong state (e.g. backward without a forward cache).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Non-finite values reached a loss, gradient, or target.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corrupt or truncated binary/text file. Carries the byte offset (or line
/// number for text formats) where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t position)
        : std::runtime_error(what + " (at " + std::to_string(position) + ")"), position_(position) {}

    std::uint64_t position() const noexcept { return position_; }

private:
    std::uint64_t position_;
};

}  // namespace anq
