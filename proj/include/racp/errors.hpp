#pragma once

#include <stdexcept>
#include <string>

namespace racp {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Raised when a softmax group has no unmasked entry.
struct EmptyGroupError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// AUC-style metrics that are undefined for the given input (e.g. single class).
struct MetricError : std::domain_error {
    using std::domain_error::domain_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace racp
