#include "safemm/sensor_sim.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace safemm {

Transform sensor_world_pose(const DepthSensorSpec& spec, const KinematicState& state) {
  if (spec.mount_link < 0) return spec.mount;
  if (static_cast<std::size_t>(spec.mount_link) >= state.link_frames.size()) {
    throw std::invalid_argument("sensor mount link out of range");
  }
  return state.link_frames[static_cast<std::size_t>(spec.mount_link)] * spec.mount;
}

std::vector<RobotShape> robot_shapes_world(const RobotModel& model, const KinematicState& state) {
  std::vector<RobotShape> out;
  for (auto& [link, shape] : link_shapes_world(model, state)) out.push_back(shape);
  return out;
}

PointCloud render_depth(const std::vector<Shape>& scene, const std::vector<RobotShape>& robot,
                        const Transform& sensor_pose, const DepthSensorSpec& spec, Rng* rng) {
  spec.validate();
  PointCloud cloud;
  cloud.sensor_id = spec.id;
  cloud.sensor_kind = spec.kind;
  cloud.origin = sensor_pose.translation();
  const auto rays = sensor_fov_rays(spec);
  cloud.points.reserve(rays.size());
  for (const Vec3& local : rays) {
    const Vec3 dir = sensor_pose.linear() * local;
    double best = std::numeric_limits<double>::infinity();
    PointClass cls = PointClass::MaxRange;
    for (const auto& s : scene) {
      if (auto t = ray_hit(cloud.origin, dir, s); t && *t < best) {
        best = *t;
        cls = PointClass::Obstacle;
      }
    }
    for (const auto& s : robot) {
      if (auto t = ray_hit(cloud.origin, dir, s); t && *t < best) {
        best = *t;
        cls = PointClass::Robot;
      }
    }
    if (best > spec.max_range) {
      cloud.points.push_back({cloud.origin + spec.max_range * dir, PointClass::MaxRange});
      continue;
    }
    double range = best;
    if (rng && spec.noise_sigma > 0.0) range = std::clamp(range + rng->truncated_normal(spec.noise_sigma), 0.0, spec.max_range);
    cloud.points.push_back({cloud.origin + range * dir, cls});
  }
  return cloud;
}

PointCloud render_depth(const std::vector<Shape>& scene, const RobotModel& model, const Configuration& q,
                        const DepthSensorSpec& spec, Rng* rng) {
  const auto state = forward_kinematics(model, q);
  return render_depth(scene, robot_shapes_world(model, state), sensor_world_pose(spec, state), spec, rng);
}

PointCloud filter_robot_points(const PointCloud& cloud, const std::vector<RobotShape>& robot, double margin) {
  if (margin < 0.0) throw std::invalid_argument("filter margin must be non-negative");
  PointCloud out = cloud;
  for (auto& p : out.points) {
    if (p.cls == PointClass::MaxRange) continue;
    const bool near_robot = std::any_of(robot.begin(), robot.end(),
                                        [&](const RobotShape& s) { return distance_to_point(s, p.position) <= margin; });
    p.cls = near_robot ? PointClass::Robot : PointClass::Obstacle;
  }
  return out;
}

PointCloud filter_robot_points(const PointCloud& cloud, const RobotModel& model, const Configuration& q,
                               double margin) {
  return filter_robot_points(cloud, robot_shapes_world(model, forward_kinematics(model, q)), margin);
}

}  // namespace safemm
