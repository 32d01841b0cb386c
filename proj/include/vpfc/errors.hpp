#pragma once

#include <stdexcept>
#include <string>

namespace vpfc {

// Data / file problems: malformed input, bad configs, impossible requests.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures that abort a run (non-finite loss, degenerate math).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroNorm : NumericError {
    ZeroNorm() : NumericError("quaternion norm below 1e-12") {}
};

struct ShapeMismatch : DataError {
    explicit ShapeMismatch(const std::string& what) : DataError("shape mismatch: " + what) {}
};

struct GraphInconsistent : DataError {
    explicit GraphInconsistent(const std::string& what)
        : DataError("backward without matching forward: " + what) {}
};

struct ParseError : DataError {
    ParseError(const std::string& file, long line, const std::string& reason)
        : DataError(file + ":" + std::to_string(line) + ": " + reason) {}
};

struct NonMonotonicTimestamps : DataError {
    NonMonotonicTimestamps(const std::string& file, long line)
        : DataError(file + ":" + std::to_string(line) + ": timestamps not strictly increasing") {}
};

struct ZeroNormQuaternion : DataError {
    ZeroNormQuaternion(const std::string& file, long line)
        : DataError(file + ":" + std::to_string(line) + ": zero-norm quaternion") {}
};

struct TraceTooShort : DataError {
    using DataError::DataError;
};

struct InvalidWindowConfig : DataError {
    using DataError::DataError;
};

struct TooFewUsers : DataError {
    using DataError::DataError;
};

struct TooFewPoints : DataError {
    using DataError::DataError;
};

struct EmptyDataset : DataError {
    using DataError::DataError;
};

struct NonFiniteLoss : NumericError {
    NonFiniteLoss(int epoch, long batch)
        : NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch)) {}
};

}  // namespace vpfc
