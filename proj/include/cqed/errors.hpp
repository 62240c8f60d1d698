#pragma once

#include <stdexcept>
#include <string>

namespace cqed {

/// Bad caller input: wrong shapes, too-short traces, invalid plans.
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A physical model produced an impossible value (e.g. a negative rate).
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Normal matrix of a least-squares problem is (numerically) singular.
class DegenerateFitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace cqed
