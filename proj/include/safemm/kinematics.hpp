#pragma once

#include "safemm/geometry.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <string>
#include <utility>
#include <vector>

namespace safemm {

using Configuration = Eigen::VectorXd;

enum class JointKind { Revolute, PlanarTranslationX, PlanarTranslationY, Fixed };

const char* to_string(JointKind kind);
JointKind joint_kind_from_string(const std::string& name);

/// One joint plus the rigid link that follows it. Link shapes are expressed
/// in the frame after the joint motion.
struct JointSpec {
  std::string name;
  JointKind kind = JointKind::Revolute;
  Vec3 axis = Vec3::UnitZ();
  Transform origin = Transform::Identity();
  double lower = 0.0;
  double upper = 0.0;
  std::vector<RobotShape> shapes;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static Pose from_transform(const Transform& tf);
  Transform to_transform() const;
};

class RobotModel {
 public:
  RobotModel() = default;
  RobotModel(std::vector<JointSpec> joints, Transform end_effector);

  std::size_t dof() const { return dof_joints_.size(); }
  std::size_t joint_count() const { return joints_.size(); }
  const std::vector<JointSpec>& joints() const { return joints_; }
  const JointSpec& joint(std::size_t index) const { return joints_.at(index); }
  const Transform& end_effector() const { return end_effector_; }

  /// Joint index driven by each degree of freedom.
  const std::vector<int>& dof_joints() const { return dof_joints_; }
  /// Degree-of-freedom index of a joint, or -1 for fixed joints.
  int joint_dof(std::size_t joint_index) const { return joint_dof_.at(joint_index); }
  bool is_revolute_dof(std::size_t dof_index) const;

  Configuration lower_limits() const;
  Configuration upper_limits() const;
  Configuration clamp(const Configuration& q) const;
  bool within_limits(const Configuration& q, double tol = 1e-12) const;
  Configuration home() const;

  /// Copy of this model with additional shapes rigidly attached to links.
  RobotModel with_extra_shapes(const std::vector<std::pair<int, RobotShape>>& extra) const;

  /// Index of the link carrying the mobile platform (last base joint), or -1
  /// if the chain has no planar translation joints.
  int platform_link() const;

 private:
  std::vector<JointSpec> joints_;
  Transform end_effector_ = Transform::Identity();
  std::vector<int> dof_joints_;
  std::vector<int> joint_dof_;
};

struct KinematicState {
  /// Frame of each joint before its own motion (parent link frame * origin).
  std::vector<Transform> joint_frames;
  /// Frame of each link, after the joint motion.
  std::vector<Transform> link_frames;
  Transform end_effector = Transform::Identity();

  Pose end_effector_pose() const { return Pose::from_transform(end_effector); }
};

KinematicState forward_kinematics(const RobotModel& model, const Configuration& q);
Pose end_effector_pose(const RobotModel& model, const Configuration& q);

/// World-frame collision shapes of every link, tagged by link index.
std::vector<std::pair<int, RobotShape>> link_shapes_world(const RobotModel& model,
                                                          const KinematicState& state);

/// 6 x DoF geometric Jacobian: rows 0-2 linear, rows 3-5 angular velocity of
/// the end effector.
Eigen::MatrixXd jacobian(const RobotModel& model, const Configuration& q);

/// Radius of the smallest cylinder about the axis of revolute joint `joint_index`
/// containing all distal link geometry at q. Uses exact bounds for capsules
/// and spheres, so it never underestimates.
double swept_radius(const RobotModel& model, const Configuration& q, std::size_t joint_index);
double swept_radius(const RobotModel& model, const KinematicState& state, std::size_t joint_index);

/// Per-DoF swept radii; translational DoFs get 0.
Eigen::VectorXd swept_radii(const RobotModel& model, const Configuration& q);
Eigen::VectorXd swept_radii(const RobotModel& model, const KinematicState& state);

/// Geodesic angle between two orientations, in [0, pi].
double rotation_angle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Position distance plus `w_rot` times the geodesic rotation angle.
double cartesian_distance(const Pose& a, const Pose& b, double w_rot = 0.5);

/// Position and axis-angle rotation error (target relative to current),
/// both in world frame.
Eigen::Matrix<double, 6, 1> pose_error(const Pose& current, const Pose& target);

Pose interpolate(const Pose& a, const Pose& b, double s);

RobotModel robot_model_from_json(const nlohmann::json& doc);
nlohmann::json robot_model_to_json(const RobotModel& model);
RobotModel load_robot_model(const std::string& path);

}  // namespace safemm
