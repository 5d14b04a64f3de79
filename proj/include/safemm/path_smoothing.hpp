#pragma once

#include "safemm/path.hpp"

#include <cstdint>
#include <optional>

namespace safemm {

/// Everything a smoothing pass needs to validate a new segment.
struct SmoothingContext {
  const RobotModel* model = nullptr;
  const WorldSnapshot* world = nullptr;
  JointMetric metric;
  SegmentCheckConfig check;

  SmoothingContext(const RobotModel& m, const WorldSnapshot& w);
  SmoothingContext(const RobotModel& m, const WorldSnapshot& w, JointMetric metric, SegmentCheckConfig check = {});

  bool segment_free(const Configuration& a, const Configuration& b) const;
};

enum class ShortcutStrategy { SingleVertex, BinaryInterval, RandomPair };

/// Removes vertices whose bypass is collision-free. `budget` bounds the
/// random-pair attempts and is ignored by the other strategies.
Path shortcut(const Path& path, const SmoothingContext& ctx, ShortcutStrategy strategy, int budget = 200,
              std::uint64_t seed = 1);

/// Moves strict per-joint extrema at interior vertices onto the straight
/// motion between their neighbours, repeated until nothing changes.
Path flatten_extrema(const Path& path, const SmoothingContext& ctx);

/// Replaces corners between two long enough segments by the connection of
/// the segment midpoints, recursively up to `max_depth`.
Path insert_center_connections(const Path& path, const SmoothingContext& ctx, double min_length = 0.2,
                               int max_depth = 3);

struct TimedPath {
  Path path;
  std::vector<double> durations;  // one per segment
  Eigen::VectorXd max_velocity;

  double total_duration() const;
};

/// Critical-joint duration of every segment.
TimedPath time_path(const Path& path, const Eigen::VectorXd& max_velocity);

/// Shifts joint motion across vertices into segments where that joint has
/// slack, whenever the two adjacent segments get faster in total. With a
/// context, a shift is only kept if both touched segments stay free.
TimedPath interleave_timing(const Path& path, const Eigen::VectorXd& max_velocity,
                            const SmoothingContext* ctx = nullptr);

struct SmoothingOptions {
  int random_budget = 200;
  double center_min_length = 0.2;
  int center_max_depth = 3;
  std::uint64_t seed = 1;
};

/// Binary-interval shortcuts, random-pair shortcuts, extremum flattening and
/// center connections. Returns the input if the result would be longer.
Path smooth_path(const Path& path, const SmoothingContext& ctx, const SmoothingOptions& options = {});

}  // namespace safemm
