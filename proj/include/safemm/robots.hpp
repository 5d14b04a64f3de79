#pragma once

#include "safemm/kinematics.hpp"

namespace safemm::robots {

/// Omnidirectional platform (x, y, yaw) carrying a 7-joint lightweight arm.
RobotModel mobile_manipulator();

/// Configuration with the arm folded above the platform.
Configuration mobile_manipulator_home();

/// Planar chain of `links` revolute joints about z, each link `length` long
/// along x, modelled as capsules of radius `radius`.
RobotModel planar_arm(int links, double length = 0.5, double radius = 0.02);

/// Mobile platform only: x, y, yaw and a single box-like body.
RobotModel mobile_base();

/// Resolve "builtin:<name>" identifiers; anything else is loaded as a file.
RobotModel resolve(const std::string& reference);

}  // namespace safemm::robots
