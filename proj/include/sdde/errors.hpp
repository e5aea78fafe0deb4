#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sdde {

/// Invalid argument: dimension mismatch, out-of-range parameter, incompatible grid.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A coefficient evaluation or scheme step produced a non-finite value.
class NumericRangeError : public std::range_error {
public:
    NumericRangeError(const std::string& what, std::vector<double> offending_input)
        : std::range_error(what), input_(std::move(offending_input)) {}

    /// Concatenated (x, y) at which evaluation failed.
    const std::vector<double>& offending_input() const noexcept { return input_; }

private:
    std::vector<double> input_;
};

}  // namespace sdde
