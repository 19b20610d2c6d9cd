#pragma once

#include <stdexcept>
#include <string>

namespace sfl {

// Invalid shapes, channel counts, hyperparameters or arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-domain arguments to the math helpers (e.g. sigma <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN or Inf reached a kernel.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint rejected on load (magic, version, truncation, checksum).
class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

// Broken internal invariant, e.g. a forward cache that no longer matches its model.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sfl
