#pragma once

#include <stdexcept>
#include <string>

namespace mds {

// Error categories map onto CLI exit codes (see tools/mdsctl.cpp).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested backend cannot run on this host or build.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mds
