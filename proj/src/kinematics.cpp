#include "safemm/kinematics.hpp"

#include "safemm/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace safemm {

namespace {

Transform joint_motion(const JointSpec& joint, double value) {
  Transform tf = Transform::Identity();
  switch (joint.kind) {
    case JointKind::Revolute:
      tf.linear() = Eigen::AngleAxisd(value, joint.axis).toRotationMatrix();
      break;
    case JointKind::PlanarTranslationX:
      tf.translation() = Vec3(value, 0.0, 0.0);
      break;
    case JointKind::PlanarTranslationY:
      tf.translation() = Vec3(0.0, value, 0.0);
      break;
    case JointKind::Fixed:
      break;
  }
  return tf;
}

Vec3 translation_direction(JointKind kind) {
  return kind == JointKind::PlanarTranslationX ? Vec3::UnitX() : Vec3::UnitY();
}

void check_dimension(const RobotModel& model, const Configuration& q) {
  if (static_cast<std::size_t>(q.size()) != model.dof()) {
    throw std::invalid_argument("configuration has " + std::to_string(q.size()) +
                                " values, model has " + std::to_string(model.dof()) + " DoF");
  }
  if (!q.allFinite()) throw std::invalid_argument("configuration contains non-finite values");
}

// Farthest point of a shape from the line through p with unit direction u.
double max_axis_distance(const RobotShape& shape, const Vec3& p, const Vec3& u) {
  auto axis_dist = [&](const Vec3& x) {
    const Vec3 rel = x - p;
    return (rel - rel.dot(u) * u).norm();
  };
  if (const auto* s = std::get_if<Sphere>(&shape)) return axis_dist(s->center) + s->radius;
  const auto& c = std::get<Capsule>(shape);
  // Distance to a line is convex along the segment, so the maximum is at an end.
  return std::max(axis_dist(c.a), axis_dist(c.b)) + c.radius;
}

Vec3 json_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

nlohmann::json vec3_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Transform json_transform(const nlohmann::json& j) {
  Transform tf = Transform::Identity();
  if (j.is_null()) return tf;
  if (j.contains("xyz")) tf.translation() = json_vec3(j.at("xyz"));
  if (j.contains("rpy")) {
    const Vec3 rpy = json_vec3(j.at("rpy"));
    tf.linear() = (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
                   Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
                      .toRotationMatrix();
  }
  return tf;
}

nlohmann::json transform_json(const Transform& tf) {
  const Eigen::Matrix3d r = tf.linear();
  // ZYX Euler angles, matching json_transform.
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {{"xyz", vec3_json(tf.translation())}, {"rpy", vec3_json(Vec3(roll, pitch, yaw))}};
}

RobotShape json_shape(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") return Sphere{json_vec3(j.at("center")), j.at("radius").get<double>()};
  if (type == "capsule") {
    return Capsule{json_vec3(j.at("a")), json_vec3(j.at("b")), j.at("radius").get<double>()};
  }
  throw ConfigError("unknown link shape type '" + type + "'");
}

nlohmann::json shape_json(const RobotShape& shape) {
  if (const auto* s = std::get_if<Sphere>(&shape)) {
    return {{"type", "sphere"}, {"center", vec3_json(s->center)}, {"radius", s->radius}};
  }
  const auto& c = std::get<Capsule>(shape);
  return {{"type", "capsule"}, {"a", vec3_json(c.a)}, {"b", vec3_json(c.b)}, {"radius", c.radius}};
}

}  // namespace

const char* to_string(JointKind kind) {
  switch (kind) {
    case JointKind::Revolute:
      return "revolute";
    case JointKind::PlanarTranslationX:
      return "planar-translation-x";
    case JointKind::PlanarTranslationY:
      return "planar-translation-y";
    case JointKind::Fixed:
      return "fixed";
  }
  return "fixed";
}

JointKind joint_kind_from_string(const std::string& name) {
  if (name == "revolute") return JointKind::Revolute;
  if (name == "planar-translation-x") return JointKind::PlanarTranslationX;
  if (name == "planar-translation-y") return JointKind::PlanarTranslationY;
  if (name == "fixed") return JointKind::Fixed;
  throw ConfigError("unknown joint kind '" + name + "'");
}

Pose Pose::from_transform(const Transform& tf) {
  Pose p;
  p.position = tf.translation();
  p.orientation = Eigen::Quaterniond(tf.linear()).normalized();
  return p;
}

Transform Pose::to_transform() const {
  Transform tf = Transform::Identity();
  tf.linear() = orientation.normalized().toRotationMatrix();
  tf.translation() = position;
  return tf;
}

RobotModel::RobotModel(std::vector<JointSpec> joints, Transform end_effector)
    : joints_(std::move(joints)), end_effector_(end_effector) {
  if (joints_.empty()) throw std::invalid_argument("robot model needs at least one joint");
  bool seen_non_base = false;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    auto& joint = joints_[i];
    if (joint.lower > joint.upper) {
      throw std::invalid_argument("joint '" + joint.name + "' has lower limit above upper limit");
    }
    const bool planar =
        joint.kind == JointKind::PlanarTranslationX || joint.kind == JointKind::PlanarTranslationY;
    if (planar && seen_non_base) {
      throw std::invalid_argument("planar translation joint '" + joint.name +
                                  "' must be at the chain base");
    }
    if (!planar) seen_non_base = true;
    if (joint.kind == JointKind::Revolute) {
      if (std::abs(joint.axis.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("joint '" + joint.name + "' axis is not unit length");
      }
    }
    if (joint.kind == JointKind::Fixed) {
      joint_dof_.push_back(-1);
    } else {
      joint_dof_.push_back(static_cast<int>(dof_joints_.size()));
      dof_joints_.push_back(static_cast<int>(i));
    }
  }
}

bool RobotModel::is_revolute_dof(std::size_t dof_index) const {
  return joints_[static_cast<std::size_t>(dof_joints_.at(dof_index))].kind == JointKind::Revolute;
}

Configuration RobotModel::lower_limits() const {
  Configuration lo(static_cast<Eigen::Index>(dof()));
  for (std::size_t i = 0; i < dof(); ++i) lo[static_cast<Eigen::Index>(i)] = joints_[dof_joints_[i]].lower;
  return lo;
}

Configuration RobotModel::upper_limits() const {
  Configuration hi(static_cast<Eigen::Index>(dof()));
  for (std::size_t i = 0; i < dof(); ++i) hi[static_cast<Eigen::Index>(i)] = joints_[dof_joints_[i]].upper;
  return hi;
}

Configuration RobotModel::clamp(const Configuration& q) const {
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

bool RobotModel::within_limits(const Configuration& q, double tol) const {
  return (q.array() >= lower_limits().array() - tol).all() &&
         (q.array() <= upper_limits().array() + tol).all();
}

Configuration RobotModel::home() const {
  return clamp(Configuration::Zero(static_cast<Eigen::Index>(dof())));
}

RobotModel RobotModel::with_extra_shapes(const std::vector<std::pair<int, RobotShape>>& extra) const {
  RobotModel copy = *this;
  for (const auto& [link, shape] : extra) {
    if (link < 0 || static_cast<std::size_t>(link) >= copy.joints_.size()) {
      throw NotFoundError("no link with index " + std::to_string(link));
    }
    copy.joints_[static_cast<std::size_t>(link)].shapes.push_back(shape);
  }
  return copy;
}

int RobotModel::platform_link() const {
  int last_planar = -1;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto kind = joints_[i].kind;
    if (kind == JointKind::PlanarTranslationX || kind == JointKind::PlanarTranslationY) {
      last_planar = static_cast<int>(i);
    }
  }
  if (last_planar < 0) return -1;
  // The platform body hangs off the first non-translational joint after the base.
  for (std::size_t i = static_cast<std::size_t>(last_planar) + 1; i < joints_.size(); ++i) {
    if (!joints_[i].shapes.empty() || joints_[i].kind == JointKind::Revolute) return static_cast<int>(i);
  }
  return last_planar;
}

KinematicState forward_kinematics(const RobotModel& model, const Configuration& q) {
  check_dimension(model, q);
  KinematicState state;
  state.joint_frames.reserve(model.joint_count());
  state.link_frames.reserve(model.joint_count());
  Transform current = Transform::Identity();
  for (std::size_t i = 0; i < model.joint_count(); ++i) {
    const auto& joint = model.joint(i);
    const int dof = model.joint_dof(i);
    const double value = dof >= 0 ? q[dof] : 0.0;
    current = current * joint.origin;
    state.joint_frames.push_back(current);
    current = current * joint_motion(joint, value);
    state.link_frames.push_back(current);
  }
  state.end_effector = current * model.end_effector();
  return state;
}

Pose end_effector_pose(const RobotModel& model, const Configuration& q) {
  return forward_kinematics(model, q).end_effector_pose();
}

std::vector<std::pair<int, RobotShape>> link_shapes_world(const RobotModel& model,
                                                          const KinematicState& state) {
  std::vector<std::pair<int, RobotShape>> out;
  for (std::size_t i = 0; i < model.joint_count(); ++i) {
    for (const auto& shape : model.joint(i).shapes) {
      out.emplace_back(static_cast<int>(i), transformed(shape, state.link_frames[i]));
    }
  }
  return out;
}

Eigen::MatrixXd jacobian(const RobotModel& model, const Configuration& q) {
  const KinematicState state = forward_kinematics(model, q);
  const Vec3 p_ee = state.end_effector.translation();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6, static_cast<Eigen::Index>(model.dof()));
  for (std::size_t d = 0; d < model.dof(); ++d) {
    const auto ji = static_cast<std::size_t>(model.dof_joints()[d]);
    const auto& joint = model.joint(ji);
    const Transform& frame = state.joint_frames[ji];
    const auto col = static_cast<Eigen::Index>(d);
    if (joint.kind == JointKind::Revolute) {
      const Vec3 axis = frame.linear() * joint.axis;
      jac.block<3, 1>(0, col) = axis.cross(p_ee - frame.translation());
      jac.block<3, 1>(3, col) = axis;
    } else {
      jac.block<3, 1>(0, col) = frame.linear() * translation_direction(joint.kind);
    }
  }
  return jac;
}

double swept_radius(const RobotModel& model, const KinematicState& state, std::size_t joint_index) {
  const auto& joint = model.joint(joint_index);
  if (joint.kind != JointKind::Revolute) {
    throw std::invalid_argument("swept radius requested for non-revolute joint '" + joint.name + "'");
  }
  const Transform& frame = state.joint_frames[joint_index];
  const Vec3 p = frame.translation();
  const Vec3 u = frame.linear() * joint.axis;
  double radius = 0.0;
  for (std::size_t i = joint_index; i < model.joint_count(); ++i) {
    for (const auto& shape : model.joint(i).shapes) {
      radius = std::max(radius, max_axis_distance(transformed(shape, state.link_frames[i]), p, u));
    }
  }
  return radius;
}

double swept_radius(const RobotModel& model, const Configuration& q, std::size_t joint_index) {
  if (joint_index >= model.joint_count()) throw std::invalid_argument("joint index out of range");
  return swept_radius(model, forward_kinematics(model, q), joint_index);
}

Eigen::VectorXd swept_radii(const RobotModel& model, const Configuration& q) {
  return swept_radii(model, forward_kinematics(model, q));
}

Eigen::VectorXd swept_radii(const RobotModel& model, const KinematicState& state) {
  Eigen::VectorXd radii = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.dof()));
  for (std::size_t d = 0; d < model.dof(); ++d) {
    if (model.is_revolute_dof(d)) {
      radii[static_cast<Eigen::Index>(d)] =
          swept_radius(model, state, static_cast<std::size_t>(model.dof_joints()[d]));
    }
  }
  return radii;
}

double rotation_angle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a.normalized().conjugate() * b.normalized();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

double cartesian_distance(const Pose& a, const Pose& b, double w_rot) {
  return (a.position - b.position).norm() + w_rot * rotation_angle(a.orientation, b.orientation);
}

Eigen::Matrix<double, 6, 1> pose_error(const Pose& current, const Pose& target) {
  Eigen::Matrix<double, 6, 1> err;
  err.head<3>() = target.position - current.position;
  Eigen::Quaterniond rel = target.orientation.normalized() * current.orientation.normalized().conjugate();
  if (rel.w() < 0.0) rel.coeffs() = -rel.coeffs();
  const Eigen::AngleAxisd aa(rel);
  err.tail<3>() = aa.angle() * aa.axis();
  return err;
}

Pose interpolate(const Pose& a, const Pose& b, double s) {
  Pose out;
  out.position = (1.0 - s) * a.position + s * b.position;
  out.orientation = a.orientation.slerp(s, b.orientation).normalized();
  return out;
}

RobotModel robot_model_from_json(const nlohmann::json& doc) {
  try {
    std::vector<JointSpec> joints;
    for (const auto& j : doc.at("joints")) {
      JointSpec spec;
      spec.name = j.value("name", "joint" + std::to_string(joints.size()));
      spec.kind = joint_kind_from_string(j.at("kind").get<std::string>());
      if (j.contains("axis")) spec.axis = json_vec3(j.at("axis"));
      spec.origin = json_transform(j.value("origin", nlohmann::json()));
      if (j.contains("limits")) {
        spec.lower = j.at("limits").at(0).get<double>();
        spec.upper = j.at("limits").at(1).get<double>();
      }
      for (const auto& s : j.value("shapes", nlohmann::json::array())) spec.shapes.push_back(json_shape(s));
      joints.push_back(std::move(spec));
    }
    return RobotModel(std::move(joints), json_transform(doc.value("end_effector", nlohmann::json())));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed robot model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid robot model: ") + e.what());
  }
}

nlohmann::json robot_model_to_json(const RobotModel& model) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& joint : model.joints()) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& s : joint.shapes) shapes.push_back(shape_json(s));
    joints.push_back({{"name", joint.name},
                      {"kind", to_string(joint.kind)},
                      {"axis", vec3_json(joint.axis)},
                      {"origin", transform_json(joint.origin)},
                      {"limits", {joint.lower, joint.upper}},
                      {"shapes", shapes}});
  }
  return {{"joints", joints}, {"end_effector", transform_json(model.end_effector())}};
}

RobotModel load_robot_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot model '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("robot model '" + path + "' is not valid JSON: " + e.what());
  }
  return robot_model_from_json(doc);
}

}  // namespace safemm
