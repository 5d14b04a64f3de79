#pragma once

#include <stdexcept>
#include <string>

namespace safemm {

/// Raised when a referenced obstacle, link or task does not exist.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed scenario, robot or sensor descriptions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few points for a perception step (plane fit, bounding box).
class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// No grasp fits the gripper.
class UngraspableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace safemm
