#pragma once

#include "safemm/kinematics.hpp"
#include "safemm/octree.hpp"

#include <Eigen/Core>

#include <limits>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

namespace safemm {

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

enum class ObstacleClass { Static, Dynamic, HandledObject, RobotAttached };

const char* to_string(ObstacleClass cls);
ObstacleClass obstacle_class_from_string(const std::string& name);

/// A rigid object made of one or more parts. Parts are given relative to the
/// object position and only translate with it, so boxes stay axis-aligned.
struct Obstacle {
  int id = 0;
  std::string name;
  std::vector<Shape> parts;
  Vec3 position = Vec3::Zero();
  ObstacleClass cls = ObstacleClass::Static;
  /// While robot-attached: carrying link and object position in that link's frame.
  int attached_link = -1;
  Vec3 attach_offset = Vec3::Zero();

  std::vector<Shape> world_parts() const;
};

/// Branch-and-bound distance index over the obstacle leaves of an octree.
/// Coarser levels are derived from Morton prefixes.
class OctreeObstacleIndex {
 public:
  OctreeObstacleIndex() = default;
  explicit OctreeObstacleIndex(const Octree& octree);

  bool empty() const { return leaf_count_ == 0; }
  std::size_t leaf_count() const { return leaf_count_; }
  const GridSpec& grid() const { return grid_; }

  /// Closest obstacle leaf to the shape; distance is infinite when nothing is
  /// closer than `cutoff`.
  ClosestPoints closest(const RobotShape& shape, double cutoff = kInfiniteDistance) const;

 private:
  void descend(const RobotShape& shape, std::uint64_t code, int level, ClosestPoints& best) const;

  GridSpec grid_;
  std::size_t leaf_count_ = 0;
  std::vector<std::unordered_set<std::uint64_t>> levels_;
};

/// Immutable world state. Mutating operations return a new snapshot.
class WorldSnapshot {
 public:
  WorldSnapshot() = default;
  explicit WorldSnapshot(std::vector<Obstacle> obstacles, double timestamp = 0.0);

  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  double timestamp() const { return timestamp_; }
  const Obstacle& obstacle(int id) const;
  bool has_obstacle(int id) const;
  const Octree* octree() const { return octree_.get(); }
  const OctreeObstacleIndex* octree_index() const { return index_.get(); }

  /// Replaces the obstacle list, keeping the octree.
  WorldSnapshot with_obstacles(std::vector<Obstacle> obstacles) const;
  WorldSnapshot with_obstacle(Obstacle obstacle) const;
  WorldSnapshot without_obstacle(int id) const;
  WorldSnapshot with_obstacle_position(int id, const Vec3& position) const;
  WorldSnapshot with_octree(std::shared_ptr<const Octree> octree) const;
  WorldSnapshot with_timestamp(double timestamp) const;

  /// Parts of every obstacle that robot links must keep clear of.
  std::vector<Shape> collision_shapes() const;

 private:
  std::vector<Obstacle> obstacles_;
  double timestamp_ = 0.0;
  std::shared_ptr<const Octree> octree_;
  std::shared_ptr<const OctreeObstacleIndex> index_;
};

/// Flags the object as about to be grasped: it stops counting as an obstacle.
WorldSnapshot mark_handled(const WorldSnapshot& world, int id);

/// The object becomes part of link `link`, keeping its current offset from
/// the link pose `link_pose`. Attaching an attached object again is a no-op.
WorldSnapshot attach_object(const WorldSnapshot& world, int id, int link, const Transform& link_pose);

/// The object becomes a dynamic obstacle again at `position`.
WorldSnapshot release_object(const WorldSnapshot& world, int id, const Vec3& position);

/// Robot geometry in world frame, including attached objects, tagged by link.
/// Attached boxes are replaced by their bounding spheres.
std::vector<std::pair<int, RobotShape>> robot_geometry(const RobotModel& model, const KinematicState& state,
                                                       const WorldSnapshot& world);

/// The model plus one bounding sphere per carried object, fixed to its link.
/// Swept radii of this model cover the load as well.
RobotModel carrying_model(const RobotModel& model, const WorldSnapshot& world);

struct LinkDistance {
  int link = -1;
  double distance = kInfiniteDistance;
  Vec3 x = Vec3::Zero();        // nearest robot point, world frame
  Vec3 x_local = Vec3::Zero();  // same point in the link frame
  Vec3 o = Vec3::Zero();        // nearest obstacle point, world frame
};

struct DistanceResult {
  double d = kInfiniteDistance;
  std::vector<LinkDistance> links;  // one entry per link with geometry

  const LinkDistance* nearest() const;
  const LinkDistance* link(int index) const;
};

struct DistanceQueryOptions {
  /// Stop refining once every link is known to be farther than this.
  double cutoff = kInfiniteDistance;
  bool include_octree = true;
};

DistanceResult min_distance(const RobotModel& model, const KinematicState& state, const WorldSnapshot& world,
                            const DistanceQueryOptions& options = {});
DistanceResult min_distance(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                            const DistanceQueryOptions& options = {});

bool is_collision_free(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                       double clearance = 0.0);

struct SpeedScaleConfig {
  double d_stop = 0.05;
  double d_slow = 0.5;
};

/// 0 at or below d_stop, 1 at or above d_slow, linear in between, applied to
/// the smaller of the two distances.
double compute_speed_scale(double d_current, double d_predicted, const SpeedScaleConfig& cfg = {});

/// Piecewise-linear configuration trajectory; holds the end configurations
/// outside its time range.
struct TimedTrajectory {
  std::vector<double> times;
  std::vector<Configuration> configurations;

  static TimedTrajectory stationary(const Configuration& q);
  Configuration at(double t) const;
};

/// Predicted ground-plane occupancy of one tracked obstacle at a time.
struct DiscSample {
  double t = 0.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
};

struct PredictionConfig {
  double horizon = 2.0;
  double dt = 0.05;
  double floor_z = 0.0;
  double ceiling_z = 2.0;
  /// Golden-section refinement around sampled minima.
  bool refine = true;
};

/// Disc forecasts are interpolated linearly in time and extruded into
/// vertical capsules between floor and ceiling.
Capsule forecast_volume(const std::vector<DiscSample>& forecast, double t, const PredictionConfig& cfg);

double predicted_min_distance(const RobotModel& model, const TimedTrajectory& motion,
                              const std::vector<std::vector<DiscSample>>& forecasts, const PredictionConfig& cfg = {});

}  // namespace safemm
