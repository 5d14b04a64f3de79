#pragma once

#include <Eigen/Geometry>

#include <optional>
#include <variant>
#include <vector>

namespace safemm {

using Vec3 = Eigen::Vector3d;
using Transform = Eigen::Isometry3d;

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

/// Segment a-b swept by a ball of `radius`.
struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

/// Axis-aligned box given by its min/max corners.
struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extents() const { return hi - lo; }
  bool contains(const Vec3& p, double tol = 0.0) const;
  Aabb inflated(double margin) const;
};

/// Geometry that can be attached to robot links: spheres and capsules.
using RobotShape = std::variant<Sphere, Capsule>;

/// Any shape that may appear as an obstacle.
using Shape = std::variant<Sphere, Capsule, Aabb>;

struct ClosestPoints {
  double distance = 0.0;  // clamped at 0 for overlapping shapes
  Vec3 on_first = Vec3::Zero();
  Vec3 on_second = Vec3::Zero();
};

RobotShape transformed(const RobotShape& shape, const Transform& tf);
Shape translated(const Shape& shape, const Vec3& offset);
Sphere bounding_sphere(const RobotShape& shape);
Sphere bounding_sphere(const Shape& shape);
Aabb bounds_of(const RobotShape& shape);
Aabb bounds_of(const Shape& shape);
Vec3 shape_center(const Shape& shape);

/// Parameter in [0,1] of the point on segment a-b closest to p.
double closest_parameter_on_segment(const Vec3& p, const Vec3& a, const Vec3& b);

/// Closest points between segments p0-p1 and q0-q1; returns (s, t) parameters.
std::pair<double, double> closest_parameters_segments(const Vec3& p0, const Vec3& p1,
                                                      const Vec3& q0, const Vec3& q1);

Vec3 closest_point_on_box(const Vec3& p, const Aabb& box);

/// Exact minimum distance between a segment and a box, including the
/// attaining points. The squared distance along the segment is piecewise
/// quadratic between slab crossings, so each piece is minimized in closed form.
ClosestPoints segment_box_closest(const Vec3& a, const Vec3& b, const Aabb& box);

double box_box_distance(const Aabb& a, const Aabb& b);

ClosestPoints closest_points(const RobotShape& robot, const Shape& obstacle);
ClosestPoints closest_points(const RobotShape& first, const RobotShape& second);
double distance_to_point(const RobotShape& shape, const Vec3& p);
double distance_to_point(const Shape& shape, const Vec3& p);

/// First hit parameter t >= 0 along origin + t*dir (dir unit); t = 0 when
/// the origin lies inside the shape.
std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Sphere& s);
std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Capsule& c);
std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Aabb& box);
std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Shape& shape);
std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const RobotShape& shape);

/// Parameter interval of segment o + t*d, t in [0, t_max], inside the box.
std::optional<std::pair<double, double>> clip_segment_to_box(const Vec3& o, const Vec3& d,
                                                             double t_max, const Aabb& box);

}  // namespace safemm
