#pragma once

#include <stdexcept>
#include <string>

namespace fedcast {

/// Tensor or vector dimensions do not agree with the declared model shape.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (profile CSV, dataset rows, checkpoint files).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered during training or optimisation.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace fedcast
