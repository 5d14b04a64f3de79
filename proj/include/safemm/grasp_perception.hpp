#pragma once

#include "safemm/sensing.hpp"

#include <cstdint>
#include <vector>

namespace safemm {

/// Points p with normal . p = offset. The normal points toward +z (away from
/// the floor for a table), so objects on the surface have positive height.
struct PlaneModel {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::vector<std::size_t> inliers;
  double rms = 0.0;

  double height(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct PlaneFitConfig {
  double threshold = 0.01;
  int iterations = 200;
  std::uint64_t seed = 1;
};

/// Random-consensus plane refined by least squares on its inliers.
/// Throws InsufficientDataError below three points.
PlaneModel fit_plane(const std::vector<Vec3>& points, const PlaneFitConfig& cfg = {});

/// Positions of the obstacle-labelled points of a cloud.
std::vector<Vec3> obstacle_points(const PointCloud& cloud);

struct SegmentationConfig {
  double min_height = 0.01;
  double cluster_radius = 0.05;
};

/// Points at least min_height above the plane, grouped into connected
/// components of the "closer than cluster_radius" relation. Clusters come
/// in order of their first point; touching objects end up in one cluster.
std::vector<std::vector<Vec3>> segment_objects(const std::vector<Vec3>& points, const PlaneModel& plane,
                                               const SegmentationConfig& cfg = {});

struct ObjectBox {
  /// Center of the box; its bottom face lies on the plane.
  Vec3 center = Vec3::Zero();
  /// Rotation about the plane normal of the first extent axis, in [0, pi/2).
  double yaw = 0.0;
  /// Along the yaw axis, across it, and along the normal.
  Vec3 extents = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  std::size_t cluster_size = 0;

  /// In-plane unit axes of the first two extents.
  Vec3 axis(int k) const;
};

/// Minimum-area footprint rectangle (rotating calipers over the convex hull
/// of the projected points) extruded up to the highest point. Ties go to
/// the lower yaw. Throws InsufficientDataError below three points.
ObjectBox fit_bounding_box(const std::vector<Vec3>& cluster, const PlaneModel& plane);

struct GraspSpec {
  Vec3 contact_a = Vec3::Zero();
  Vec3 contact_b = Vec3::Zero();
  /// Direction of the hand motion toward the object (against the normal).
  Vec3 approach = -Vec3::UnitZ();
  double aperture = 0.0;
  /// Angle of the closing direction about the normal.
  double closing_yaw = 0.0;
};

/// Grasp across the narrowest horizontal extent that fits the gripper with
/// the finger clearance; on a tie the lower yaw wins. Throws
/// UngraspableError when neither side fits.
GraspSpec select_grasp(const ObjectBox& box, double max_aperture, double finger_clearance);

}  // namespace safemm
