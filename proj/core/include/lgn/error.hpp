#pragma once

#include <stdexcept>
#include <string>

namespace lgn {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch or non-square input where a square matrix is required.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed convergence, or an undefined metric.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written, or had malformed content.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite or crossed the divergence threshold.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int epoch, double loss)
        : NumericError(what), epoch_(epoch), loss_(loss) {}

    [[nodiscard]] int epoch() const noexcept { return epoch_; }
    [[nodiscard]] double loss() const noexcept { return loss_; }

private:
    int epoch_;
    double loss_;
};

}  // namespace lgn
