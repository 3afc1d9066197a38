#pragma once

#include <stdexcept>
#include <string>

namespace maescale {

// Precondition violated by the caller (bad shapes, out-of-range fractions, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not produce a result (singular system, divergence).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Data set does not vary enough to determine the scaling-law parameters.
class IdentifiabilityError : public DomainError {
public:
    using DomainError::DomainError;
};

// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training. Carries the position where it happened.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(int epoch, int batch)
        : NumericError("nan-loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

}  // namespace maescale
