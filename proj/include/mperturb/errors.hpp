#pragma once

#include <stdexcept>
#include <string>

namespace mperturb {

// Error categories mirror the CLI exit codes: 2 config, 3 numerical, 4 validation.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mperturb
