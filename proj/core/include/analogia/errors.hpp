#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace analogia {

// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed binary input. Carries the byte offset where decoding failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// File was written by an incompatible format version.
class VersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration entry.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace analogia
