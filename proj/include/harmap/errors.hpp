#pragma once

#include <stdexcept>
#include <string>

namespace harmap {

// exit-code contract: certificate 2, geometry/feasibility 3, config 4

struct CertError : std::runtime_error {
  explicit CertError(const std::string& m) : std::runtime_error(m) {}
};

struct GeomError : std::runtime_error {
  explicit GeomError(const std::string& m) : std::runtime_error(m) {}
};

struct FeasibilityError : GeomError {
  explicit FeasibilityError(const std::string& m) : GeomError(m) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace harmap
