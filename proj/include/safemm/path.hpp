#pragma once

#include "safemm/collision_world.hpp"
#include "safemm/kinematics.hpp"

#include <iosfwd>
#include <vector>

namespace safemm {

using Path = std::vector<Configuration>;

/// Weighted Euclidean distance in configuration space.
struct JointMetric {
  Eigen::VectorXd weights;

  double distance(const Configuration& a, const Configuration& b) const;
  double norm(const Eigen::VectorXd& dq) const;
};

/// Revolute joints weigh their swept radius at the home configuration,
/// translations weigh 1, so one unit is roughly one meter of link motion.
JointMetric default_metric(const RobotModel& model);

double path_length(const Path& path, const JointMetric& metric);

/// Upper bound on how far any robot point moves for a joint offset `dq`
/// from a configuration with swept radii `radii`: the revolute terms add up,
/// the planar translation enters with its Euclidean length.
double displacement_bound(const RobotModel& model, const Eigen::VectorXd& radii, const Eigen::VectorXd& dq);

struct SegmentCheckConfig {
  /// Every checked configuration must keep at least this clearance.
  double clearance = 0.02;
  /// Largest displacement between checks when the clearance is small.
  double resolution = 0.03125;

  void validate() const;
};

/// Adaptive check of the straight segment a-b. Each checked configuration
/// certifies a neighbourhood of displacement up to its clearance, so steps
/// grow in open space and shrink to `resolution` near obstacles.
/// `model` should include carried loads (see carrying_model).
bool segment_collision_free(const RobotModel& model, const WorldSnapshot& world, const Configuration& a,
                            const Configuration& b, const SegmentCheckConfig& cfg = {});

/// One configuration per line, values separated by spaces.
void write_path(std::ostream& out, const Path& path);
Path read_path(std::istream& in);

}  // namespace safemm
