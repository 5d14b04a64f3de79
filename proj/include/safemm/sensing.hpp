#pragma once

#include "safemm/geometry.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace safemm {

enum class SensorKind { LineScan2D, Depth3D };

/// Ray-based depth sensor. Directions are generated in the sensor frame with
/// x forward, y left, z up.
struct DepthSensorSpec {
  int id = 0;
  std::string name;
  SensorKind kind = SensorKind::Depth3D;
  /// Link the sensor is mounted on, or -1 for a sensor fixed in the world.
  int mount_link = -1;
  Transform mount = Transform::Identity();
  double h_fov = 1.0;
  double v_fov = 0.75;
  int h_rays = 32;
  int v_rays = 24;
  double max_range = 3.5;
  double noise_sigma = 0.0;

  /// Throws std::invalid_argument when the sensor description violates its invariants.
  void validate() const;
};

/// Unit ray directions in the sensor frame: a linspace over the horizontal
/// field of view (and the vertical one for 3D sensors), row-major by pitch.
std::vector<Vec3> sensor_fov_rays(const DepthSensorSpec& spec);

enum class PointClass { Obstacle, Robot, MaxRange };

const char* to_string(PointClass cls);
PointClass point_class_from_string(const std::string& name);

struct CloudPoint {
  Vec3 position = Vec3::Zero();
  PointClass cls = PointClass::Obstacle;
};

struct PointCloud {
  int sensor_id = 0;
  SensorKind sensor_kind = SensorKind::Depth3D;
  Vec3 origin = Vec3::Zero();
  std::vector<CloudPoint> points;
};

/// Text exchange format: one "x y z class" line per point.
void write_point_cloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_point_cloud(std::istream& in);

}  // namespace safemm
