#include "safemm/robots.hpp"

#include "safemm/errors.hpp"

#include <cmath>
#include <numbers>

namespace safemm::robots {

namespace {

constexpr double kPi = std::numbers::pi;

Transform offset(double x, double y, double z) {
  Transform tf = Transform::Identity();
  tf.translation() = Vec3(x, y, z);
  return tf;
}

JointSpec revolute(std::string name, Transform origin, Vec3 axis, double limit,
                   std::vector<RobotShape> shapes) {
  JointSpec j;
  j.name = std::move(name);
  j.kind = JointKind::Revolute;
  j.origin = origin;
  j.axis = axis;
  j.lower = -limit;
  j.upper = limit;
  j.shapes = std::move(shapes);
  return j;
}

std::vector<JointSpec> base_joints(std::vector<RobotShape> body) {
  JointSpec x;
  x.name = "base_x";
  x.kind = JointKind::PlanarTranslationX;
  x.lower = -6.0;
  x.upper = 6.0;
  JointSpec y = x;
  y.name = "base_y";
  y.kind = JointKind::PlanarTranslationY;
  auto yaw = revolute("base_yaw", Transform::Identity(), Vec3::UnitZ(), kPi, std::move(body));
  return {x, y, yaw};
}

std::vector<RobotShape> platform_body() {
  return {Capsule{Vec3(-0.22, 0.0, 0.3), Vec3(0.22, 0.0, 0.3), 0.3}};
}

}  // namespace

RobotModel mobile_manipulator() {
  auto joints = base_joints(platform_body());
  const double deg = kPi / 180.0;
  auto link = [](double len, double r) { return std::vector<RobotShape>{Capsule{Vec3::Zero(), Vec3(0, 0, len), r}}; };
  joints.push_back(revolute("a1", offset(0.2, 0.0, 0.6), Vec3::UnitZ(), 170 * deg, link(0.31, 0.07)));
  joints.push_back(revolute("a2", offset(0, 0, 0.31), Vec3::UnitY(), 120 * deg, link(0.2, 0.07)));
  joints.push_back(revolute("a3", offset(0, 0, 0.2), Vec3::UnitZ(), 170 * deg, link(0.2, 0.07)));
  joints.push_back(revolute("a4", offset(0, 0, 0.2), -Vec3::UnitY(), 120 * deg, link(0.2, 0.065)));
  joints.push_back(revolute("a5", offset(0, 0, 0.2), Vec3::UnitZ(), 170 * deg, link(0.19, 0.06)));
  joints.push_back(revolute("a6", offset(0, 0, 0.19), Vec3::UnitY(), 120 * deg,
                            {Sphere{Vec3::Zero(), 0.06}}));
  joints.push_back(revolute("a7", Transform::Identity(), Vec3::UnitZ(), 170 * deg,
                            {Capsule{Vec3(0, 0, 0.02), Vec3(0, 0, 0.12), 0.05}}));
  return RobotModel(std::move(joints), offset(0, 0, 0.16));
}

Configuration mobile_manipulator_home() {
  Configuration q = Configuration::Zero(10);
  // Elbow bent, hand pointing down about 0.65 m ahead of the platform center.
  q << 0.0, 0.0, 0.0, 0.0, 0.27, 0.0, -1.8, 0.0, 1.08, 0.0;
  return q;
}

RobotModel planar_arm(int links, double length, double radius) {
  if (links < 1) throw std::invalid_argument("planar arm needs at least one link");
  std::vector<JointSpec> joints;
  for (int i = 0; i < links; ++i) {
    joints.push_back(revolute("j" + std::to_string(i), i == 0 ? Transform::Identity() : offset(length, 0, 0),
                              Vec3::UnitZ(), kPi, {Capsule{Vec3::Zero(), Vec3(length, 0, 0), radius}}));
  }
  return RobotModel(std::move(joints), offset(length, 0, 0));
}

RobotModel mobile_base() {
  return RobotModel(base_joints(platform_body()), offset(0.0, 0.0, 0.6));
}

RobotModel resolve(const std::string& reference) {
  const std::string prefix = "builtin:";
  if (reference.rfind(prefix, 0) == 0) {
    const std::string name = reference.substr(prefix.size());
    if (name == "mobile_manipulator") return mobile_manipulator();
    if (name == "mobile_base") return mobile_base();
    if (name.rfind("planar_arm", 0) == 0) {
      const std::string count = name.substr(std::string("planar_arm").size());
      return planar_arm(count.empty() ? 3 : std::stoi(count));
    }
    throw ConfigError("unknown builtin robot '" + name + "'");
  }
  return load_robot_model(reference);
}

}  // namespace safemm::robots
