#pragma once

#include "safemm/collision_world.hpp"
#include "safemm/elastic_band.hpp"
#include "safemm/grasp_perception.hpp"
#include "safemm/octree.hpp"
#include "safemm/path_smoothing.hpp"
#include "safemm/planner.hpp"
#include "safemm/sensing.hpp"
#include "safemm/tracking.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace safemm {

struct Waypoint {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Obstacle that the robot does not know in advance. It follows a
/// piecewise-linear schedule and holds its first and last positions.
struct ScriptedObstacle {
  Obstacle obstacle;
  std::vector<Waypoint> waypoints;

  Vec3 position_at(double t) const;
};

enum class TaskKind { Pick, Place, Handover };

const char* to_string(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::Pick;
  std::string name;
  /// Pick: box searched for the object.
  Aabb region;
  /// Place: bottom center of the object on the target surface.
  /// Handover: tool center point position.
  Vec3 target = Vec3::Zero();
};

struct SimSettings {
  /// Nominal speed along the band, in metric units per second.
  double nominal_speed = 0.5;
  /// Cartesian speed of descend, lift and retreat motions (m/s).
  double act_speed = 0.1;
  int band_iterations = 2;
  /// A band blocked this long triggers a new plan; after give_up_after the
  /// task fails.
  double replan_after = 2.0;
  double give_up_after = 15.0;
  double lift_height = 0.15;
  /// Tool center point depth below the top face of a grasped object.
  double grasp_depth = 0.03;
  double max_aperture = 0.085;
  double finger_clearance = 0.01;
  double handover_dwell = 0.5;
  /// Points this close to robot or mapped geometry are attributed to it.
  double filter_margin = 0.03;
  GridSpec workspace = GridSpec{Vec3(-4.0, -4.0, 0.0), 8.0, 6};
  /// Ramp on the clearance to sensed obstacles and its prediction.
  SpeedScaleConfig safety;
  /// Ramp and stop window on the band clearance (mapped and sensed).
  ExecutionConfig execution;
  PredictionConfig prediction;
  BandConfig band;
  /// Planner defaults keep a margin above the stop distance.
  PlannerConfig planner = [] {
    PlannerConfig p;
    p.check.clearance = 0.1;
    return p;
  }();
  SmoothingOptions smoothing;
  TrackingConfig tracking;
  PlaneFitConfig plane_fit;
  SegmentationConfig segmentation;
};

struct Scenario {
  std::string name;
  std::string robot_reference;
  RobotModel robot;
  Configuration start;
  /// Sensors used for workspace monitoring every tick.
  std::vector<DepthSensorSpec> sensors;
  /// Sensors rendered only when an object has to be located.
  std::vector<DepthSensorSpec> grasp_cameras;
  /// Known geometry (furniture, objects); its ids are unique across the scenario.
  std::vector<Obstacle> map;
  /// Ids of map obstacles that may be picked.
  std::vector<int> graspable;
  std::vector<ScriptedObstacle> scripted;
  std::vector<TaskSpec> tasks;
  double tick = 0.05;
  double duration = 60.0;
  std::uint64_t seed = 1;
  SimSettings settings;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Parses the JSON scenario document. Relative file references resolve
/// against `base_dir`. Throws ConfigError on any malformed entry.
Scenario scenario_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);

}  // namespace safemm
