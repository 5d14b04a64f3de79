#include "safemm/planner.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safemm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

JointMetric resolve_metric(const RobotModel& model, const PlannerConfig& cfg) {
  if (cfg.metric.weights.size() == 0) return default_metric(model);
  if (cfg.metric.weights.size() != static_cast<Eigen::Index>(model.dof())) {
    throw std::invalid_argument("metric weights do not match the robot");
  }
  return cfg.metric;
}

class Sampler {
 public:
  Sampler(const RobotModel& model, const PlannerConfig& cfg)
      : lower_(cfg.sample_lower.value_or(model.lower_limits())), upper_(cfg.sample_upper.value_or(model.upper_limits())) {
    if (lower_.size() != static_cast<Eigen::Index>(model.dof()) || upper_.size() != lower_.size()) {
      throw std::invalid_argument("sampling box does not match the robot");
    }
    lower_ = lower_.cwiseMax(model.lower_limits());
    upper_ = upper_.cwiseMin(model.upper_limits());
    if ((upper_.array() < lower_.array()).any()) throw std::invalid_argument("empty sampling box");
  }

  Configuration uniform(Rng& rng) const {
    Configuration q(lower_.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(lower_[i], upper_[i]);
    return q;
  }

 private:
  Configuration lower_, upper_;
};

bool start_valid(const RobotModel& model, const WorldSnapshot& world, const Configuration& q,
                 const PlannerConfig& cfg) {
  if (q.size() != static_cast<Eigen::Index>(model.dof()) || !model.within_limits(q, 1e-9)) return false;
  return min_distance(model, q, world).d >= cfg.check.clearance;
}

}  // namespace

Configuration ik_step(const RobotModel& model, const Configuration& q, const Pose& target, const JointMetric& metric,
                      const IkConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(model.dof());
  const Pose current = end_effector_pose(model, q);
  Eigen::Matrix<double, 6, 1> err = pose_error(current, target);
  if (err.isZero(0.0)) return model.clamp(q);
  Eigen::MatrixXd j = jacobian(model, q);
  j.bottomRows(3) *= cfg.w_rot;
  err.tail<3>() *= cfg.w_rot;

  const Configuration lo = model.lower_limits();
  const Configuration hi = model.upper_limits();
  Eigen::VectorXd inv_w2 = metric.weights.cwiseProduct(metric.weights).cwiseInverse();
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(n);
  for (Eigen::Index pass = 0; pass <= n; ++pass) {
    const Eigen::MatrixXd jw = j * inv_w2.asDiagonal();
    Eigen::Matrix<double, 6, 6> a = jw * j.transpose();
    a.diagonal().array() += cfg.damping * cfg.damping;
    dq = jw.transpose() * a.ldlt().solve(err);
    bool frozen = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (inv_w2[i] == 0.0) continue;
      if ((q[i] <= lo[i] && dq[i] < 0.0) || (q[i] >= hi[i] && dq[i] > 0.0)) {
        inv_w2[i] = 0.0;
        frozen = true;
      }
    }
    if (!frozen) break;
  }
  const double length = metric.norm(dq);
  if (length > cfg.max_step) dq *= cfg.max_step / length;
  return model.clamp(q + dq);
}

IkResult solve_ik(const RobotModel& model, const Configuration& q0, const Pose& target, const JointMetric& metric,
                  double tol, int iterations, const IkConfig& cfg) {
  IkResult r;
  r.q = model.clamp(q0);
  r.residual = cartesian_distance(end_effector_pose(model, r.q), target, cfg.w_rot);
  while (r.residual > tol && r.iterations < iterations) {
    r.q = ik_step(model, r.q, target, metric, cfg);
    r.residual = cartesian_distance(end_effector_pose(model, r.q), target, cfg.w_rot);
    ++r.iterations;
  }
  r.converged = r.residual <= tol;
  return r;
}

void PlannerConfig::validate() const {
  if (max_iterations < 1 || !(time_budget > 0.0) || !(extension_step > 0.0) || !(approach_trigger > 0.0) ||
      !(approach_step > 0.0) || !(approach_rotation_step > 0.0) || !(goal_tolerance > 0.0)) {
    throw std::invalid_argument("planner parameters must be positive");
  }
  if (!(goal_tolerance < approach_trigger)) throw std::invalid_argument("goal tolerance must be below the approach trigger");
  if (goal_bias < 0.0 || goal_bias > 1.0) throw std::invalid_argument("goal bias must lie in [0, 1]");
  if (approach_ik_iterations < 1 || ik_restarts < 1 || ik_iterations < 1) {
    throw std::invalid_argument("iteration counts must be positive");
  }
  check.validate();
}

const char* to_string(PlanStatus status) {
  switch (status) {
    case PlanStatus::Success: return "success";
    case PlanStatus::InvalidStart: return "invalid-start";
    case PlanStatus::BudgetExhausted: return "budget-exhausted";
    case PlanStatus::NoGoalConfiguration: return "no-goal-configuration";
  }
  return "unknown";
}

PlannerTree::PlannerTree(const RobotModel& model, const Pose& goal, const JointMetric& metric, double w_rot)
    : model_(model), goal_(goal), metric_(metric), w_rot_(w_rot) {}

int PlannerTree::add(const Configuration& q, int parent) {
  TreeVertex v;
  v.q = q;
  v.parent = parent;
  v.pose = end_effector_pose(model_, q);
  v.goal_distance = cartesian_distance(v.pose, goal_, w_rot_);
  vertices_.push_back(std::move(v));
  return size() - 1;
}

int PlannerTree::nearest(const Configuration& q) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i) {
    const double d = metric_.distance(vertices_[static_cast<std::size_t>(i)].q, q);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Path PlannerTree::path_to(int i) const {
  Path path;
  for (int v = i; v >= 0; v = (*this)[v].parent) path.push_back((*this)[v].q);
  return {path.rbegin(), path.rend()};
}

int extend(PlannerTree& tree, const RobotModel& model, const WorldSnapshot& world, const Configuration& q_rand,
           const PlannerConfig& cfg) {
  const JointMetric metric = resolve_metric(model, cfg);
  const int near = tree.nearest(q_rand);
  if (near < 0) return -1;
  const Configuration& from = tree[near].q;
  const double d = metric.distance(from, q_rand);
  if (d < 1e-9) return -1;
  const Configuration to = d <= cfg.extension_step ? q_rand : Configuration(from + (q_rand - from) * (cfg.extension_step / d));
  if (!segment_collision_free(model, world, from, to, cfg.check)) return -1;
  return tree.add(to, near);
}

ApproachResult approach_attempt(PlannerTree& tree, const RobotModel& model, const WorldSnapshot& world, int from,
                                const Pose& goal, const PlannerConfig& cfg) {
  const JointMetric metric = resolve_metric(model, cfg);
  ApproachResult result;
  result.last_vertex = from;
  tree.mutable_vertex(from).approach_tried = true;
  if (tree[from].goal_distance <= cfg.goal_tolerance) {
    result.success = true;
    return result;
  }
  const Pose start = tree[from].pose;
  const double travel = (goal.position - start.position).norm();
  const double turn = rotation_angle(start.orientation, goal.orientation);
  const int waypoints =
      std::max(1, static_cast<int>(std::ceil(std::max(travel / cfg.approach_step, turn / cfg.approach_rotation_step))));
  // Intermediate waypoints only need to stay near the Cartesian line.
  const double waypoint_tol = std::max(cfg.goal_tolerance, 0.25 * cfg.approach_step);
  Configuration q = tree[from].q;
  for (int k = 1; k <= waypoints; ++k) {
    const Pose target = interpolate(start, goal, static_cast<double>(k) / waypoints);
    const double tol = k == waypoints ? cfg.goal_tolerance : waypoint_tol;
    const IkResult ik = solve_ik(model, q, target, metric, tol, cfg.approach_ik_iterations, cfg.ik);
    if (!ik.converged) return result;
    if (!segment_collision_free(model, world, q, ik.q, cfg.check)) return result;
    result.last_vertex = tree.add(ik.q, result.last_vertex);
    tree.mutable_vertex(result.last_vertex).approach_tried = true;
    ++result.added;
    q = ik.q;
  }
  result.success = true;
  return result;
}

PlanResult plan(const RobotModel& model, const WorldSnapshot& world, const Configuration& q_start, const Pose& goal,
                const PlannerConfig& cfg) {
  cfg.validate();
  const auto started = Clock::now();
  PlanResult result;
  if (!start_valid(model, world, q_start, cfg)) {
    result.status = PlanStatus::InvalidStart;
    return result;
  }
  const JointMetric metric = resolve_metric(model, cfg);
  PlannerConfig local = cfg;
  local.metric = metric;
  const Sampler sampler(model, cfg);
  Rng rng(cfg.seed);
  PlannerTree tree(model, goal, metric, cfg.ik.w_rot);
  tree.add(q_start, -1);

  auto finish = [&](PlanStatus status, int goal_vertex) {
    result.status = status;
    if (goal_vertex >= 0) result.path = tree.path_to(goal_vertex);
    result.stats.vertices = tree.size();
    result.stats.seconds = seconds_since(started);
    return result;
  };
  auto try_approach = [&](int v) {
    ++result.stats.approach_attempts;
    const ApproachResult a = approach_attempt(tree, model, world, v, goal, local);
    if (a.success) ++result.stats.approach_successes;
    return a;
  };

  if (tree[0].goal_distance <= cfg.goal_tolerance) return finish(PlanStatus::Success, 0);
  if (tree[0].goal_distance <= cfg.approach_trigger) {
    const ApproachResult a = try_approach(0);
    if (a.success) return finish(PlanStatus::Success, a.last_vertex);
  }
  while (result.stats.iterations < cfg.max_iterations && seconds_since(started) < cfg.time_budget) {
    ++result.stats.iterations;
    Configuration q_rand = sampler.uniform(rng);
    if (rng.uniform() < cfg.goal_bias) {
      // Seeding the descent from a tree vertex keeps goal samples on the part
      // of the solution manifold the tree can reach.
      const auto seed_vertex = static_cast<int>(rng.index(static_cast<std::uint64_t>(tree.size())));
      q_rand = solve_ik(model, tree[seed_vertex].q, goal, metric, cfg.goal_tolerance, cfg.goal_sample_ik_iterations,
                        cfg.ik).q;
    }
    const int v = extend(tree, model, world, q_rand, local);
    if (v < 0 || tree[v].approach_tried || tree[v].goal_distance > cfg.approach_trigger) continue;
    const ApproachResult a = try_approach(v);
    if (a.success) return finish(PlanStatus::Success, a.last_vertex);
  }
  return finish(PlanStatus::BudgetExhausted, -1);
}

PlanResult plan_two_stage(const RobotModel& model, const WorldSnapshot& world, const Configuration& q_start,
                          const Pose& goal, const PlannerConfig& cfg) {
  cfg.validate();
  const auto started = Clock::now();
  PlanResult result;
  if (!start_valid(model, world, q_start, cfg)) {
    result.status = PlanStatus::InvalidStart;
    return result;
  }
  const JointMetric metric = resolve_metric(model, cfg);
  PlannerConfig local = cfg;
  local.metric = metric;
  const Sampler sampler(model, cfg);
  Rng rng(cfg.seed);

  // Stage 1: the first collision-free IK solution from a random seed.
  std::optional<Configuration> q_goal;
  if (cartesian_distance(end_effector_pose(model, q_start), goal, cfg.ik.w_rot) <= cfg.goal_tolerance) q_goal = q_start;
  for (int attempt = 0; !q_goal && attempt < cfg.ik_restarts; ++attempt) {
    const IkResult ik = solve_ik(model, sampler.uniform(rng), goal, metric, cfg.goal_tolerance, cfg.ik_iterations, cfg.ik);
    if (ik.converged && min_distance(model, ik.q, world).d >= cfg.check.clearance) q_goal = ik.q;
  }
  PlannerTree tree(model, goal, metric, cfg.ik.w_rot);
  tree.add(q_start, -1);
  auto finish = [&](PlanStatus status, int goal_vertex) {
    result.status = status;
    if (goal_vertex >= 0) result.path = tree.path_to(goal_vertex);
    result.stats.vertices = tree.size();
    result.stats.seconds = seconds_since(started);
    return result;
  };
  if (!q_goal) return finish(PlanStatus::NoGoalConfiguration, -1);
  if (metric.distance(q_start, *q_goal) < 1e-12) return finish(PlanStatus::Success, 0);

  // Stage 2: goal-biased RRT toward the fixed configuration.
  auto try_connect = [&](int v) {
    if (metric.distance(tree[v].q, *q_goal) > cfg.extension_step) return -1;
    if (!segment_collision_free(model, world, tree[v].q, *q_goal, cfg.check)) return -1;
    return tree.add(*q_goal, v);
  };
  if (const int g = try_connect(0); g >= 0) return finish(PlanStatus::Success, g);
  while (result.stats.iterations < cfg.max_iterations && seconds_since(started) < cfg.time_budget) {
    ++result.stats.iterations;
    const Configuration q_rand = rng.uniform() < cfg.goal_bias ? *q_goal : sampler.uniform(rng);
    const int v = extend(tree, model, world, q_rand, local);
    if (v < 0) continue;
    if (const int g = try_connect(v); g >= 0) return finish(PlanStatus::Success, g);
  }
  return finish(PlanStatus::BudgetExhausted, -1);
}

}  // namespace safemm
