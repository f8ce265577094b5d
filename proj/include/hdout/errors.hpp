#pragma once

#include <stdexcept>
#include <string>

namespace hdout {

/// Invalid model, scenario or CLI configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input data that cannot be processed (non-finite entries, empty matrices).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation needs something the input was not built with, e.g. retained coefficients.
class CapabilityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A case for which no theoretical prediction exists.
class UnsupportedCaseError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Vector passed where a unit vector is required.
class NormalizationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure while executing or persisting a run.
class RunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hdout
