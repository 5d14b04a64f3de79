#pragma once

#include "safemm/collision_world.hpp"
#include "safemm/path.hpp"

#include <optional>
#include <vector>

namespace safemm {

struct BandConfig {
  double lambda_int = 1.0;
  double lambda_obst = 2.0;
  /// Obstacles farther than this exert no force.
  double d_max = 1.0;
  /// Joint offset for the central differences of the obstacle force.
  double probe = 1e-2;
  /// Clearance reported in empty space.
  double d_cap = 2.0;
  /// Nominal step as a fraction of the shorter adjacent band segment.
  double step_gain = 0.25;
  /// Hard cap on a step, as a fraction of the bubble clearance.
  double step_fraction = 0.5;
  /// Halvings allowed per gap before the gap counts as blocked.
  int max_insert_depth = 10;
  /// Query distances at every probe configuration instead of reusing the
  /// nearest points of the bubble.
  bool distance_per_probe = false;
  bool lock_start = true;
  bool lock_end = true;
  JointMetric metric;  // empty means default_metric(model)

  void validate() const;
};

struct Bubble {
  Configuration q;
  /// Clearance lower bound, capped at d_cap; 0 when q is in collision.
  double d = 0.0;
  /// Swept radii at q, frozen at creation.
  Eigen::VectorXd radii;
  std::vector<LinkDistance> links;

  bool valid() const { return d > 0.0; }
};

Bubble make_bubble(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                   const BandConfig& cfg = {});

/// Membership in the free-space certificate of the bubble.
bool bubble_contains(const Bubble& b, const Configuration& q, const RobotModel& model);

/// Point of the segment between the bubble centers that splits it in the
/// ratio of the clearances. Empty when both clearances are zero.
std::optional<Configuration> overlap_candidate(const Bubble& a, const Bubble& b);

/// Conservative: true only if the candidate lies in both bubbles.
bool bubbles_overlap(const Bubble& a, const Bubble& b, const RobotModel& model);

double scaling_factor(double d, double d_max);

/// Repulsion in configuration space. Translational joints follow the nearest
/// point pair, revolute joints the central difference of the distance of
/// the nearest distal link to its fixed obstacle point. `world` is needed
/// only with distance_per_probe.
Eigen::VectorXd obstacle_force(const RobotModel& model, const Bubble& bubble, const BandConfig& cfg,
                               const WorldSnapshot* world = nullptr);

class ElasticBand {
 public:
  ElasticBand(RobotModel model, const Path& path, const WorldSnapshot& world, BandConfig cfg = {});

  const RobotModel& model() const { return model_; }
  const BandConfig& config() const { return cfg_; }
  const JointMetric& metric() const { return metric_; }
  const std::vector<Bubble>& bubbles() const { return bubbles_; }
  std::size_t size() const { return bubbles_.size(); }
  Path path() const;

  /// Index of the first bubble in collision or of the gap that could not be
  /// bridged, if any.
  std::optional<std::size_t> blockage() const { return blockage_; }
  double min_clearance() const;

  /// Swaps the robot model, e.g. after picking up an object.
  void set_model(RobotModel model, const WorldSnapshot& world);

  /// Recomputes every bubble in `world`.
  void refresh(const WorldSnapshot& world);

  /// Restores bubble overlap by inserting midpoints and dropping redundant
  /// bubbles; records a blockage if that fails.
  void maintain(const WorldSnapshot& world);

  /// Weighted sum of contraction and repulsion, tangential part removed.
  Eigen::VectorXd total_force(std::size_t i, const WorldSnapshot* world = nullptr) const;

  /// One deformation iteration: refresh, move each free interior bubble
  /// within its own certificate, refresh again and maintain.
  void step(const WorldSnapshot& world);

  /// Moves the first bubble to the robot's configuration. The `passed`
  /// bubbles after it are dropped first (the goal bubble always stays);
  /// maintain then drops any that became redundant.
  void set_start(const Configuration& q, const WorldSnapshot& world, std::size_t passed = 0);

 private:
  RobotModel model_;
  BandConfig cfg_;
  JointMetric metric_;
  std::vector<Bubble> bubbles_;
  std::optional<std::size_t> blockage_;
};

/// Contraction toward both neighbours, each term a unit vector in the band
/// metric; a coincident neighbour contributes nothing.
Eigen::VectorXd internal_force(const ElasticBand& band, std::size_t i);

enum class ExecutionStatus { Proceed, Slow, Stop };
const char* to_string(ExecutionStatus status);

struct ExecutionConfig {
  SpeedScaleConfig speed;
  /// Band length ahead of the robot, in metric units, inside which a
  /// blockage forces a stop.
  double stop_window = 1.0;
};

struct ExecutionDecision {
  ExecutionStatus status = ExecutionStatus::Proceed;
  double speed_scale = 1.0;
  double clearance_ahead = kInfiniteDistance;
};

ExecutionDecision check_execution(const ElasticBand& band, std::size_t progress, const ExecutionConfig& cfg = {});

}  // namespace safemm
