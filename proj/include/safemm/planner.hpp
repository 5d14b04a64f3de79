#pragma once

#include "safemm/path.hpp"
#include "safemm/random.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace safemm {

struct IkConfig {
  double damping = 0.05;
  /// Largest metric length of a single step.
  double max_step = 0.2;
  double w_rot = 0.5;
};

/// One damped least-squares step toward `target`, weighted by the joint
/// metric and clamped to the joint limits. Joints sitting at a limit and
/// pushed outward are frozen for the step.
Configuration ik_step(const RobotModel& model, const Configuration& q, const Pose& target, const JointMetric& metric,
                      const IkConfig& cfg = {});

/// Repeats ik_step until the Cartesian distance to `target` is at most `tol`
/// or `iterations` steps were taken.
struct IkResult {
  Configuration q;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};
IkResult solve_ik(const RobotModel& model, const Configuration& q0, const Pose& target, const JointMetric& metric,
                  double tol, int iterations, const IkConfig& cfg = {});

struct PlannerConfig {
  int max_iterations = 4000;
  /// Wall-clock safety net; the iteration limit is what keeps runs reproducible.
  double time_budget = 30.0;
  double extension_step = 0.3;
  double approach_trigger = 0.5;
  double approach_step = 0.05;
  double approach_rotation_step = 0.1;
  double goal_tolerance = 0.01;
  double goal_bias = 0.1;
  int approach_ik_iterations = 30;
  int goal_sample_ik_iterations = 20;
  /// Two-stage baseline: random restarts and iterations per IK solve.
  int ik_restarts = 100;
  int ik_iterations = 200;
  std::uint64_t seed = 1;
  JointMetric metric;  // empty means default_metric(model)
  SegmentCheckConfig check;
  IkConfig ik;
  /// Optional sampling box; defaults to the joint limits.
  std::optional<Configuration> sample_lower;
  std::optional<Configuration> sample_upper;

  void validate() const;
};

struct TreeVertex {
  Configuration q;
  int parent = -1;
  Pose pose;
  double goal_distance = 0.0;
  bool approach_tried = false;
};

enum class PlanStatus { Success, InvalidStart, BudgetExhausted, NoGoalConfiguration };

const char* to_string(PlanStatus status);

struct PlannerStats {
  int iterations = 0;
  int vertices = 0;
  int approach_attempts = 0;
  int approach_successes = 0;
  double seconds = 0.0;
};

struct PlanResult {
  PlanStatus status = PlanStatus::BudgetExhausted;
  Path path;
  PlannerStats stats;

  bool success() const { return status == PlanStatus::Success; }
};

/// Search tree with cached end-effector poses.
class PlannerTree {
 public:
  PlannerTree(const RobotModel& model, const Pose& goal, const JointMetric& metric, double w_rot);

  int add(const Configuration& q, int parent);
  const TreeVertex& operator[](int i) const { return vertices_.at(static_cast<std::size_t>(i)); }
  TreeVertex& mutable_vertex(int i) { return vertices_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(vertices_.size()); }
  int nearest(const Configuration& q) const;
  Path path_to(int i) const;

 private:
  const RobotModel& model_;
  Pose goal_;
  JointMetric metric_;
  double w_rot_;
  std::vector<TreeVertex> vertices_;
};

/// Steps from the nearest vertex toward `q_rand`; returns the new vertex or -1.
int extend(PlannerTree& tree, const RobotModel& model, const WorldSnapshot& world, const Configuration& q_rand,
           const PlannerConfig& cfg);

/// Straight Cartesian descent from vertex `from` to the goal. Collision-free
/// waypoint configurations are appended to the tree as they are found.
struct ApproachResult {
  bool success = false;
  int last_vertex = -1;
  int added = 0;
};
ApproachResult approach_attempt(PlannerTree& tree, const RobotModel& model, const WorldSnapshot& world, int from,
                                const Pose& goal, const PlannerConfig& cfg);

/// Single-stage planner toward a Cartesian goal pose.
PlanResult plan(const RobotModel& model, const WorldSnapshot& world, const Configuration& q_start, const Pose& goal,
                const PlannerConfig& cfg = {});

/// Baseline: pick one collision-free IK solution, then plan to it.
PlanResult plan_two_stage(const RobotModel& model, const WorldSnapshot& world, const Configuration& q_start,
                          const Pose& goal, const PlannerConfig& cfg = {});

}  // namespace safemm
