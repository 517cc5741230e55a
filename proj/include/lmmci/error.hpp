#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmmci {

// Bad input: malformed formula, unusable data file, invalid option.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(std::size_t position, const std::string& message)
        : DataError("formula:" + std::to_string(position + 1) + ": " + message),
          position_(position) {}

    // Zero-based character offset into the formula text.
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

// Numerical failure: non-PSD matrix, singular system, failed refits.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lmmci
