#pragma once

#include <stdexcept>
#include <string>

namespace durendal {

// Error taxonomy shared across the library. Each failure mode the modules
// promise in their contracts maps to one of these types so callers (and
// tests) can discriminate.

/// Shape/dimension incompatibility between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Row/column/node index outside the valid range.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// A precondition of an operation was violated (non-scalar loss, empty
/// input where at least one element is required, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Operation requested under the wrong temporal scheme.
struct UnsupportedSchemeError : ContractError {
    using ContractError::ContractError;
};

/// Non-finite value encountered where a finite one is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Metric requested on data for which it is undefined.
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Text input could not be parsed; message carries the line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reference to an undeclared node type or relation.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structurally well-formed input violating a dataset invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Negative-sampling candidate space exhausted.
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad run/synth configuration (unknown key, missing required key, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace durendal
