#pragma once

#include <stdexcept>
#include <string>

namespace crowdnav {

// Non-finite or otherwise ill-formed kinematic input.
class InvalidStateError : public std::runtime_error {
 public:
  explicit InvalidStateError(const std::string& what) : std::runtime_error(what) {}
};

// Geometry that admits no valid construction (coincident agents, zero-length segments, ...).
class DegenerateGeometryError : public std::runtime_error {
 public:
  explicit DegenerateGeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Hard (unrelaxable) constraint set is empty; signals a modeling bug upstream.
class InfeasibleGeometryError : public std::runtime_error {
 public:
  explicit InfeasibleGeometryError(const std::string& what) : std::runtime_error(what) {}
};

class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// External predictor did not answer within the deadline; caller should reuse the last sample set.
class StaleSampleError : public std::runtime_error {
 public:
  explicit StaleSampleError(const std::string& what) : std::runtime_error(what) {}
};

// External predictor answered with a malformed or out-of-contract payload.
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Scenario generation could not place agents for this seed.
class SeedInfeasibleError : public std::runtime_error {
 public:
  explicit SeedInfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crowdnav
