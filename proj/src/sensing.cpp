#include "safemm/sensing.hpp"

#include "safemm/errors.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace safemm {

namespace {

std::vector<double> angle_linspace(double fov, int count) {
  std::vector<double> out;
  if (count == 1) return {0.0};
  const bool full_circle = fov >= 2.0 * std::numbers::pi - 1e-12;
  // A full circle would otherwise place the first and last ray on top of each other.
  const double step = full_circle ? fov / count : fov / (count - 1);
  for (int i = 0; i < count; ++i) out.push_back(-0.5 * fov + i * step);
  return out;
}

}  // namespace

void DepthSensorSpec::validate() const {
  const double two_pi = 2.0 * std::numbers::pi;
  if (!(h_fov > 0.0 && h_fov <= two_pi + 1e-12)) throw std::invalid_argument("horizontal FOV must be in (0, 2pi]");
  if (kind == SensorKind::Depth3D && !(v_fov > 0.0 && v_fov <= two_pi + 1e-12)) {
    throw std::invalid_argument("vertical FOV must be in (0, 2pi]");
  }
  if (h_rays < 1 || v_rays < 1) throw std::invalid_argument("ray counts must be at least 1");
  if (kind == SensorKind::LineScan2D && v_rays != 1) {
    throw std::invalid_argument("a 2D line scanner has exactly one vertical ray");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
  if (!(max_range > 0.0)) throw std::invalid_argument("max range must be positive");
}

std::vector<Vec3> sensor_fov_rays(const DepthSensorSpec& spec) {
  spec.validate();
  const auto yaws = angle_linspace(spec.h_fov, spec.h_rays);
  const auto pitches = spec.kind == SensorKind::LineScan2D ? std::vector<double>{0.0}
                                                           : angle_linspace(spec.v_fov, spec.v_rays);
  std::vector<Vec3> rays;
  rays.reserve(yaws.size() * pitches.size());
  for (double pitch : pitches) {
    for (double yaw : yaws) {
      rays.emplace_back(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
    }
  }
  return rays;
}

const char* to_string(PointClass cls) {
  switch (cls) {
    case PointClass::Obstacle:
      return "obstacle";
    case PointClass::Robot:
      return "robot";
    case PointClass::MaxRange:
      return "max-range";
  }
  return "obstacle";
}

PointClass point_class_from_string(const std::string& name) {
  if (name == "obstacle") return PointClass::Obstacle;
  if (name == "robot") return PointClass::Robot;
  if (name == "max-range") return PointClass::MaxRange;
  throw ConfigError("unknown point class '" + name + "'");
}

void write_point_cloud(std::ostream& out, const PointCloud& cloud) {
  char line[160];
  std::snprintf(line, sizeof line, "# sensor %d origin %.9g %.9g %.9g kind %s\n", cloud.sensor_id,
                cloud.origin.x(), cloud.origin.y(), cloud.origin.z(),
                cloud.sensor_kind == SensorKind::LineScan2D ? "2d" : "3d");
  out << line;
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %s\n", p.position.x(), p.position.y(), p.position.z(),
                  to_string(p.cls));
    out << line;
  }
}

PointCloud read_point_cloud(std::istream& in) {
  PointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string hash, tag;
      ss >> hash >> tag;
      if (tag == "sensor") {
        std::string origin_tag, kind_tag, kind;
        ss >> cloud.sensor_id >> origin_tag >> cloud.origin.x() >> cloud.origin.y() >> cloud.origin.z() >>
            kind_tag >> kind;
        cloud.sensor_kind = kind == "2d" ? SensorKind::LineScan2D : SensorKind::Depth3D;
      }
      continue;
    }
    CloudPoint p;
    std::string cls;
    if (!(ss >> p.position.x() >> p.position.y() >> p.position.z() >> cls)) {
      throw ConfigError("malformed point cloud line " + std::to_string(line_no));
    }
    p.cls = point_class_from_string(cls);
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace safemm
