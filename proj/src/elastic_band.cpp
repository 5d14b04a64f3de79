#include "safemm/elastic_band.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safemm {

namespace {

// Nearest point pair among links moved by joint `joint_index`; the chain is
// serial, so those are the links with index >= joint_index.
const LinkDistance* nearest_distal(const std::vector<LinkDistance>& links, int joint_index) {
  const LinkDistance* best = nullptr;
  for (const auto& l : links) {
    if (l.link < joint_index || !std::isfinite(l.distance)) continue;
    if (!best || l.distance < best->distance) best = &l;
  }
  return best;
}

double distal_distance(const DistanceResult& r, int joint_index) {
  const LinkDistance* l = nearest_distal(r.links, joint_index);
  return l ? l->distance : kInfiniteDistance;
}

double weighted_dot(const JointMetric& m, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a.cwiseProduct(m.weights)).dot(b.cwiseProduct(m.weights));
}

}  // namespace

void BandConfig::validate() const {
  if (!(lambda_int >= 0.0) || !(lambda_obst >= 0.0)) throw std::invalid_argument("force weights must be non-negative");
  if (!(d_max > 0.0)) throw std::invalid_argument("d_max must be positive");
  if (!(d_cap >= d_max)) throw std::invalid_argument("d_cap must be at least d_max");
  if (!(probe > 0.0)) throw std::invalid_argument("probe offset must be positive");
  if (!(step_gain > 0.0)) throw std::invalid_argument("step gain must be positive");
  if (!(step_fraction > 0.0 && step_fraction < 1.0)) throw std::invalid_argument("step fraction must be in (0, 1)");
  if (max_insert_depth < 0) throw std::invalid_argument("insert depth must be non-negative");
}

Bubble make_bubble(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                   const BandConfig& cfg) {
  Bubble b;
  b.q = q;
  const KinematicState state = forward_kinematics(model, q);
  DistanceQueryOptions options;
  options.cutoff = cfg.d_cap;
  DistanceResult r = min_distance(model, state, world, options);
  b.d = std::min(r.d, cfg.d_cap);
  b.radii = swept_radii(model, state);
  b.links = std::move(r.links);
  return b;
}

bool bubble_contains(const Bubble& b, const Configuration& q, const RobotModel& model) {
  return displacement_bound(model, b.radii, q - b.q) < b.d;
}

std::optional<Configuration> overlap_candidate(const Bubble& a, const Bubble& b) {
  const double sum = a.d + b.d;
  if (!(sum > 0.0)) return std::nullopt;
  return Configuration((b.d * a.q + a.d * b.q) / sum);
}

bool bubbles_overlap(const Bubble& a, const Bubble& b, const RobotModel& model) {
  const auto c = overlap_candidate(a, b);
  return c && bubble_contains(a, *c, model) && bubble_contains(b, *c, model);
}

double scaling_factor(double d, double d_max) {
  if (d >= d_max) return 0.0;
  const double s = (d_max - d) / d_max;
  return s * s;
}

Eigen::VectorXd obstacle_force(const RobotModel& model, const Bubble& bubble, const BandConfig& cfg,
                               const WorldSnapshot* world) {
  const auto dof = static_cast<Eigen::Index>(model.dof());
  Eigen::VectorXd force = Eigen::VectorXd::Zero(dof);
  const double s = scaling_factor(bubble.d, cfg.d_max);
  if (s == 0.0) return force;
  if (cfg.distance_per_probe && !world) throw std::invalid_argument("per-probe distances need a world");

  const KinematicState state = forward_kinematics(model, bubble.q);
  for (Eigen::Index k = 0; k < dof; ++k) {
    const int joint_index = model.dof_joints()[static_cast<std::size_t>(k)];
    const JointSpec& joint = model.joint(static_cast<std::size_t>(joint_index));
    Configuration plus = bubble.q;
    Configuration minus = bubble.q;
    plus[k] += cfg.probe;
    minus[k] -= cfg.probe;

    if (cfg.distance_per_probe) {
      DistanceQueryOptions options;
      options.cutoff = cfg.d_cap;
      const double dp = distal_distance(min_distance(model, plus, *world, options), joint_index);
      const double dm = distal_distance(min_distance(model, minus, *world, options), joint_index);
      if (std::isfinite(dp) && std::isfinite(dm)) force[k] = s * (dp - dm) / (2.0 * cfg.probe);
      continue;
    }

    const LinkDistance* near = nearest_distal(bubble.links, joint_index);
    if (!near) continue;
    if (joint.kind == JointKind::Revolute) {
      const Vec3 xp = forward_kinematics(model, plus).link_frames[static_cast<std::size_t>(near->link)] * near->x_local;
      const Vec3 xm = forward_kinematics(model, minus).link_frames[static_cast<std::size_t>(near->link)] * near->x_local;
      force[k] = s * ((xp - near->o).norm() - (xm - near->o).norm()) / (2.0 * cfg.probe);
    } else {
      // Unit push away from the obstacle, projected on the translation axis.
      const Vec3 away = near->x - near->o;
      const double len = away.norm();
      if (len == 0.0) continue;
      const Vec3 local = joint.kind == JointKind::PlanarTranslationX ? Vec3::UnitX() : Vec3::UnitY();
      const Vec3 axis = state.joint_frames[static_cast<std::size_t>(joint_index)].linear() * local;
      force[k] = s * away.dot(axis) / len;
    }
  }
  return force;
}

ElasticBand::ElasticBand(RobotModel model, const Path& path, const WorldSnapshot& world, BandConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (path.empty()) throw std::invalid_argument("band needs at least one configuration");
  const auto dof = static_cast<Eigen::Index>(model_.dof());
  metric_ = cfg_.metric.weights.size() == 0 ? default_metric(model_) : cfg_.metric;
  if (metric_.weights.size() != dof) throw std::invalid_argument("metric weights do not match the robot");
  for (const auto& q : path) {
    if (q.size() != dof) throw std::invalid_argument("path configuration does not match the robot");
    bubbles_.push_back(make_bubble(model_, q, world, cfg_));
  }
  maintain(world);
}

Path ElasticBand::path() const {
  Path out;
  out.reserve(bubbles_.size());
  for (const auto& b : bubbles_) out.push_back(b.q);
  return out;
}

double ElasticBand::min_clearance() const {
  double d = kInfiniteDistance;
  for (const auto& b : bubbles_) d = std::min(d, b.d);
  return d;
}

void ElasticBand::set_model(RobotModel model, const WorldSnapshot& world) {
  if (model.dof() != model_.dof()) throw std::invalid_argument("replacement model has a different DoF count");
  model_ = std::move(model);
  refresh(world);
  maintain(world);
}

void ElasticBand::refresh(const WorldSnapshot& world) {
  for (auto& b : bubbles_) b = make_bubble(model_, b.q, world, cfg_);
}

void ElasticBand::maintain(const WorldSnapshot& world) {
  // Drop duplicates and interior bubbles whose neighbours already overlap.
  for (std::size_t i = 1; i + 1 < bubbles_.size();) {
    const bool duplicate = bubbles_[i].q == bubbles_[i - 1].q || bubbles_[i].q == bubbles_[i + 1].q;
    const bool redundant = bubbles_[i - 1].valid() && bubbles_[i + 1].valid() &&
                           bubbles_overlap(bubbles_[i - 1], bubbles_[i + 1], model_);
    if (duplicate || redundant) {
      bubbles_.erase(bubbles_.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      ++i;
    }
  }
  if (bubbles_.size() == 2 && bubbles_[0].q == bubbles_[1].q) bubbles_.pop_back();

  // Bridge gaps by bisection. Each bubble remembers how many halvings
  // produced it so a gap that keeps shrinking is eventually given up.
  std::vector<int> level(bubbles_.size(), 0);
  for (std::size_t i = 0; i + 1 < bubbles_.size();) {
    const Bubble& a = bubbles_[i];
    const Bubble& b = bubbles_[i + 1];
    const int next_level = std::max(level[i], level[i + 1]) + 1;
    if (!a.valid() || !b.valid() || bubbles_overlap(a, b, model_) || next_level > cfg_.max_insert_depth) {
      ++i;
      continue;
    }
    Bubble mid = make_bubble(model_, 0.5 * (a.q + b.q), world, cfg_);
    if (!mid.valid()) {
      ++i;
      continue;
    }
    bubbles_.insert(bubbles_.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(mid));
    level.insert(level.begin() + static_cast<std::ptrdiff_t>(i) + 1, next_level);
  }

  blockage_.reset();
  for (std::size_t i = 0; i < bubbles_.size(); ++i) {
    if (!bubbles_[i].valid() || (i + 1 < bubbles_.size() && !bubbles_overlap(bubbles_[i], bubbles_[i + 1], model_))) {
      // A colliding bubble is blocked itself; an unbridged gap at its far end.
      blockage_ = bubbles_[i].valid() ? i + 1 : i;
      break;
    }
  }
}

Eigen::VectorXd internal_force(const ElasticBand& band, std::size_t i) {
  const auto& bubbles = band.bubbles();
  if (i >= bubbles.size()) throw std::out_of_range("bubble index out of range");
  Eigen::VectorXd force = Eigen::VectorXd::Zero(bubbles[i].q.size());
  for (std::size_t n : {i - 1, i + 1}) {
    if (n >= bubbles.size()) continue;  // i - 1 wraps for i == 0
    const Eigen::VectorXd delta = bubbles[n].q - bubbles[i].q;
    const double len = band.metric().norm(delta);
    if (len > 0.0) force += delta / len;
  }
  return force;
}

Eigen::VectorXd ElasticBand::total_force(std::size_t i, const WorldSnapshot* world) const {
  Eigen::VectorXd force = cfg_.lambda_int * internal_force(*this, i);
  if (cfg_.lambda_obst > 0.0) force += cfg_.lambda_obst * obstacle_force(model_, bubbles_[i], cfg_, world);
  if (i > 0 && i + 1 < bubbles_.size()) {
    const Eigen::VectorXd tangent = bubbles_[i + 1].q - bubbles_[i - 1].q;
    const double tt = weighted_dot(metric_, tangent, tangent);
    if (tt > 0.0) force -= (weighted_dot(metric_, force, tangent) / tt) * tangent;
  }
  return force;
}

void ElasticBand::step(const WorldSnapshot& world) {
  refresh(world);
  maintain(world);
  const std::size_t n = bubbles_.size();
  std::vector<Configuration> moved(n);
  for (std::size_t i = 0; i < n; ++i) {
    moved[i] = bubbles_[i].q;
    if ((i == 0 && cfg_.lock_start) || (i + 1 == n && cfg_.lock_end) || n < 2) continue;
    const Bubble& b = bubbles_[i];
    if (!b.valid()) continue;
    const Eigen::VectorXd force = total_force(i, &world);
    const double reach = displacement_bound(model_, b.radii, force);
    if (!(reach > 0.0)) continue;
    double spacing = kInfiniteDistance;
    if (i > 0) spacing = std::min(spacing, metric_.distance(bubbles_[i - 1].q, b.q));
    if (i + 1 < n) spacing = std::min(spacing, metric_.distance(bubbles_[i + 1].q, b.q));
    const double eps = std::min(cfg_.step_gain * spacing, cfg_.step_fraction * b.d / reach);
    // Clamping only shortens joint offsets, so the result stays in the bubble.
    moved[i] = model_.clamp(b.q + eps * force);
  }
  for (std::size_t i = 0; i < n; ++i) bubbles_[i].q = moved[i];
  refresh(world);
  maintain(world);
}

void ElasticBand::set_start(const Configuration& q, const WorldSnapshot& world, std::size_t passed) {
  if (q.size() != static_cast<Eigen::Index>(model_.dof())) throw std::invalid_argument("configuration does not match the robot");
  passed = std::min(passed, bubbles_.size() >= 2 ? bubbles_.size() - 2 : std::size_t{0});
  bubbles_.erase(bubbles_.begin() + 1, bubbles_.begin() + 1 + static_cast<std::ptrdiff_t>(passed));
  bubbles_.front() = make_bubble(model_, q, world, cfg_);
  maintain(world);
}

const char* to_string(ExecutionStatus status) {
  switch (status) {
    case ExecutionStatus::Proceed: return "proceed";
    case ExecutionStatus::Slow: return "slow";
    case ExecutionStatus::Stop: return "stop";
  }
  return "unknown";
}

ExecutionDecision check_execution(const ElasticBand& band, std::size_t progress, const ExecutionConfig& cfg) {
  const auto& bubbles = band.bubbles();
  if (progress >= bubbles.size()) throw std::out_of_range("progress index beyond the band");
  ExecutionDecision decision;
  const auto blocked = band.blockage();
  double travelled = 0.0;
  bool blocked_ahead = false;
  for (std::size_t i = progress; i < bubbles.size(); ++i) {
    if (i > progress) travelled += band.metric().distance(bubbles[i - 1].q, bubbles[i].q);
    if (i > progress && travelled > cfg.stop_window) break;
    decision.clearance_ahead = std::min(decision.clearance_ahead, bubbles[i].d);
    if (blocked && *blocked == i) blocked_ahead = true;
  }
  decision.speed_scale = compute_speed_scale(decision.clearance_ahead, decision.clearance_ahead, cfg.speed);
  if (blocked_ahead || decision.speed_scale <= 0.0) {
    decision.status = ExecutionStatus::Stop;
    decision.speed_scale = 0.0;
  } else if (decision.speed_scale < 1.0 || (blocked && *blocked > progress)) {
    decision.status = ExecutionStatus::Slow;
  }
  return decision;
}

}  // namespace safemm
