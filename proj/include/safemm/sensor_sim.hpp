#pragma once

#include "safemm/kinematics.hpp"
#include "safemm/random.hpp"
#include "safemm/sensing.hpp"

#include <vector>

namespace safemm {

/// World pose of a sensor, following its mount link when it has one.
Transform sensor_world_pose(const DepthSensorSpec& spec, const KinematicState& state);

/// Casts every ray of the sensor against the obstacles and the robot geometry
/// (both in world frame). Rays that hit nothing produce a max-range point.
/// Range noise is drawn from `rng` when the sensor has a positive sigma.
PointCloud render_depth(const std::vector<Shape>& scene, const std::vector<RobotShape>& robot,
                        const Transform& sensor_pose, const DepthSensorSpec& spec, Rng* rng = nullptr);

PointCloud render_depth(const std::vector<Shape>& scene, const RobotModel& model, const Configuration& q,
                        const DepthSensorSpec& spec, Rng* rng = nullptr);

/// Relabels hit points: robot when within `margin` of any robot shape,
/// obstacle otherwise. Max-range points keep their label.
PointCloud filter_robot_points(const PointCloud& cloud, const std::vector<RobotShape>& robot, double margin);

PointCloud filter_robot_points(const PointCloud& cloud, const RobotModel& model, const Configuration& q,
                               double margin);

std::vector<RobotShape> robot_shapes_world(const RobotModel& model, const KinematicState& state);

}  // namespace safemm
