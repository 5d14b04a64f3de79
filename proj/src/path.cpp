#include "safemm/path.hpp"

#include "safemm/errors.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace safemm {

double JointMetric::norm(const Eigen::VectorXd& dq) const {
  if (dq.size() != weights.size()) throw std::invalid_argument("metric dimension mismatch");
  return dq.cwiseProduct(weights).norm();
}

double JointMetric::distance(const Configuration& a, const Configuration& b) const { return norm(b - a); }

JointMetric default_metric(const RobotModel& model) {
  const Eigen::VectorXd radii = swept_radii(model, model.home());
  JointMetric m;
  m.weights = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(model.dof()));
  for (std::size_t d = 0; d < model.dof(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    // Joints with geometry on their own axis still need a nonzero weight.
    if (model.is_revolute_dof(d)) m.weights[i] = std::max(radii[i], 0.05);
  }
  return m;
}

double path_length(const Path& path, const JointMetric& metric) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += metric.distance(path[i - 1], path[i]);
  return total;
}

double displacement_bound(const RobotModel& model, const Eigen::VectorXd& radii, const Eigen::VectorXd& dq) {
  double rotation = 0.0;
  double translation = 0.0;
  for (std::size_t d = 0; d < model.dof(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    if (model.is_revolute_dof(d)) {
      rotation += radii[i] * std::abs(dq[i]);
    } else {
      translation += dq[i] * dq[i];
    }
  }
  return rotation + std::sqrt(translation);
}

void SegmentCheckConfig::validate() const {
  if (!(clearance > 0.0)) throw std::invalid_argument("segment check clearance must be positive");
  if (!(resolution > 0.0)) throw std::invalid_argument("segment check resolution must be positive");
}

bool segment_collision_free(const RobotModel& model, const WorldSnapshot& world, const Configuration& a,
                            const Configuration& b, const SegmentCheckConfig& cfg) {
  cfg.validate();
  // Between two checked configurations every point lies within half a step
  // of one of them, so the minimum step must stay below twice the clearance.
  const double min_step = std::min(cfg.resolution, 2.0 * cfg.clearance);
  const Eigen::VectorXd delta = b - a;
  double s = 0.0;
  while (true) {
    const Configuration q = a + s * delta;
    const KinematicState state = forward_kinematics(model, q);
    const Eigen::VectorXd radii = swept_radii(model, state);
    const double remaining = displacement_bound(model, radii, (1.0 - s) * delta);
    DistanceQueryOptions options;
    options.cutoff = cfg.clearance + remaining;
    const double d = min_distance(model, state, world, options).d;
    if (d < cfg.clearance) return false;
    if (s >= 1.0 || remaining < d - cfg.clearance) return true;
    const double per_unit = displacement_bound(model, radii, delta);
    const double step = std::max(d - cfg.clearance, min_step);
    s = std::min(1.0, s + step / per_unit);
  }
}

void write_path(std::ostream& out, const Path& path) {
  char buf[32];
  for (const auto& q : path) {
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", q[i]);
      if (i > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Path read_path(std::istream& in) {
  Path path;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream fields(line);
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw ConfigError("path line " + std::to_string(line_no) + ": not a number");
    if (!path.empty() && values.size() != static_cast<std::size_t>(path.front().size())) {
      throw ConfigError("path line " + std::to_string(line_no) + ": dimension changes");
    }
    path.push_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return path;
}

}  // namespace safemm
