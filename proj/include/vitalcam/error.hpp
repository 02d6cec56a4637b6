#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vitalcam {

/// Shape disagreement between two operands. Carries both extents.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
        : std::invalid_argument(what + " (expected " + std::to_string(expected) + ", got "
                                + std::to_string(actual) + ")"),
          expected_(expected),
          actual_(actual) {}

    explicit DimensionError(const std::string& what)
        : std::invalid_argument(what) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_ = 0;
    std::size_t actual_ = 0;
};

/// Malformed on-disk container (bad magic, truncation, unsupported rank).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration. `field()` names the offending entry.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field.empty() ? what : field + ": " + what),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numerical failure at run time (non-finite values, degenerate statistics).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vitalcam
