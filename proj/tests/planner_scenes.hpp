#pragma once

// Planning problems shared by the unit and acceptance tests.

#include "safemm/planner.hpp"
#include "safemm/robots.hpp"

#include <functional>
#include <string>

namespace safemm::test {

inline Obstacle box_obstacle(int id, const Vec3& lo, const Vec3& hi) {
  Obstacle o;
  o.id = id;
  o.name = "box" + std::to_string(id);
  o.position = 0.5 * (lo + hi);
  o.parts = {Aabb{lo - o.position, hi - o.position}};
  return o;
}

inline Obstacle ball_obstacle(int id, const Vec3& at, double r) {
  Obstacle o;
  o.id = id;
  o.name = "ball" + std::to_string(id);
  o.position = at;
  o.parts = {Sphere{Vec3::Zero(), r}};
  return o;
}

struct PlanningScene {
  std::string name;
  RobotModel model;
  WorldSnapshot world;
  Configuration start;
  PlannerConfig config;
  /// Draws a reachable goal pose for a seed.
  std::function<Pose(std::uint64_t)> goal;
};

/// Goal poses are end-effector poses of random collision-free configurations.
inline Pose reachable_goal(const RobotModel& model, const WorldSnapshot& world, std::uint64_t seed,
                           const Configuration& lower, const Configuration& upper, double clearance) {
  Rng rng(seed * 7919 + 13);
  for (;;) {
    Configuration q(lower.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = rng.uniform(lower[i], upper[i]);
    if (min_distance(model, q, world).d >= 2.0 * clearance) return end_effector_pose(model, q);
  }
}

inline PlanningScene planar_empty_scene() {
  PlanningScene s;
  s.name = "planar3-empty";
  s.model = robots::planar_arm(3);
  s.start = Configuration::Zero(3);
  s.goal = [m = s.model](std::uint64_t seed) {
    return reachable_goal(m, WorldSnapshot{}, seed, m.lower_limits(), m.upper_limits(), 0.02);
  };
  return s;
}

inline PlanningScene planar_obstacle_scene() {
  PlanningScene s;
  s.name = "planar4-balls";
  s.model = robots::planar_arm(4, 0.4);
  s.world = WorldSnapshot({ball_obstacle(1, Vec3(0.9, 0.7, 0.0), 0.2), ball_obstacle(2, Vec3(-0.6, -0.9, 0.0), 0.25),
                           ball_obstacle(3, Vec3(0.2, -1.2, 0.0), 0.15)});
  s.start = Configuration::Zero(4);
  s.goal = [m = s.model, w = s.world](std::uint64_t seed) {
    return reachable_goal(m, w, seed, m.lower_limits(), m.upper_limits(), 0.02);
  };
  return s;
}

/// Mobile manipulator in front of a table; the goal is a pose above the
/// table that the arm reaches without moving the platform.
inline PlanningScene table_scene() {
  PlanningScene s;
  s.name = "mm-table";
  s.model = robots::mobile_manipulator();
  s.world = WorldSnapshot({box_obstacle(1, Vec3(0.65, -0.7, 0.0), Vec3(1.25, 0.7, 0.7))});
  // Arm turned to the side, away from the table.
  s.start = robots::mobile_manipulator_home();
  s.start[3] = 1.6;
  Configuration lower = s.model.lower_limits();
  Configuration upper = s.model.upper_limits();
  lower.head<3>() << -1.5, -1.5, -std::numbers::pi;
  upper.head<3>() << 1.5, 1.5, std::numbers::pi;
  s.config.sample_lower = lower;
  s.config.sample_upper = upper;
  s.goal = [m = s.model, w = s.world](std::uint64_t seed) {
    // Arm-only variation around the home posture, platform fixed at the origin.
    Configuration lo = robots::mobile_manipulator_home();
    Configuration hi = lo;
    for (int j = 3; j < 10; ++j) {
      lo[j] -= 0.4;
      hi[j] += 0.4;
    }
    for (int tries = 0; tries < 10000; ++tries, seed += 1000) {
      const Pose p = reachable_goal(m, w, seed, m.clamp(lo), m.clamp(hi), 0.02);
      if (p.position.x() > 0.7 && p.position.z() > 0.8) return p;
    }
    throw std::runtime_error("no table goal found");
  };
  return s;
}

/// Mobile manipulator that has to drive around a wall to a shelf.
inline PlanningScene wall_scene() {
  PlanningScene s;
  s.name = "mm-wall";
  s.model = robots::mobile_manipulator();
  s.world = WorldSnapshot({box_obstacle(1, Vec3(1.0, -2.5, 0.0), Vec3(1.2, 0.8, 1.5)),
                           box_obstacle(2, Vec3(2.6, -0.4, 0.0), Vec3(3.0, 0.4, 0.8))});
  s.start = robots::mobile_manipulator_home();
  Configuration lower = s.model.lower_limits();
  Configuration upper = s.model.upper_limits();
  lower.head<3>() << -1.0, -1.0, -std::numbers::pi;
  upper.head<3>() << 3.5, 2.5, std::numbers::pi;
  s.config.sample_lower = lower;
  s.config.sample_upper = upper;
  s.goal = [m = s.model, w = s.world](std::uint64_t seed) {
    Rng rng(seed);
    Configuration q = robots::mobile_manipulator_home();
    q[0] = 1.9 + rng.uniform(-0.1, 0.1);
    q[1] = rng.uniform(-0.2, 0.2);
    q[2] = rng.uniform(-0.3, 0.3);
    Configuration lo = q, hi = q;
    for (int j = 3; j < 10; ++j) {
      lo[j] -= 0.3;
      hi[j] += 0.3;
    }
    return reachable_goal(m, w, seed, m.clamp(lo), m.clamp(hi), 0.02);
  };
  return s;
}

/// Open floor with a few pillars; goals anywhere within a few meters.
inline PlanningScene pillar_scene() {
  PlanningScene s;
  s.name = "mm-pillars";
  s.model = robots::mobile_manipulator();
  std::vector<Obstacle> obstacles;
  int id = 1;
  for (const Vec3& c : {Vec3(1.2, 0.9, 0.0), Vec3(1.4, -1.0, 0.0), Vec3(-1.2, 1.1, 0.0)}) {
    Obstacle o;
    o.id = id++;
    o.position = c;
    o.parts = {Capsule{Vec3(0, 0, 0.0), Vec3(0, 0, 1.8), 0.15}};
    obstacles.push_back(o);
  }
  s.world = WorldSnapshot(obstacles);
  s.start = robots::mobile_manipulator_home();
  Configuration lower = s.model.lower_limits();
  Configuration upper = s.model.upper_limits();
  lower.head<3>() << -2.5, -2.5, -std::numbers::pi;
  upper.head<3>() << 2.5, 2.5, std::numbers::pi;
  s.config.sample_lower = lower;
  s.config.sample_upper = upper;
  s.goal = [m = s.model, w = s.world](std::uint64_t seed) {
    Rng rng(seed);
    Configuration lo = robots::mobile_manipulator_home();
    Configuration hi = lo;
    lo.head<3>() << -2.0, -2.0, -std::numbers::pi;
    hi.head<3>() << 2.0, 2.0, std::numbers::pi;
    for (int j = 3; j < 10; ++j) {
      lo[j] -= 0.4;
      hi[j] += 0.4;
    }
    return reachable_goal(m, w, seed, m.clamp(lo), m.clamp(hi), 0.02);
  };
  return s;
}

inline std::vector<PlanningScene> planning_scenes() {
  return {planar_empty_scene(), planar_obstacle_scene(), table_scene(), wall_scene(), pillar_scene()};
}

/// Independent fixed-step re-check: consecutive samples are at most `step`
/// apart in the displacement bound, and each must have positive clearance.
inline bool dense_path_check(const RobotModel& model, const WorldSnapshot& world, const Path& path, double step) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Eigen::VectorXd delta = path[i + 1] - path[i];
    double reach = 0.0;
    for (const auto& q : {path[i], path[i + 1]}) {
      reach = std::max(reach, displacement_bound(model, swept_radii(model, q), delta));
    }
    const int n = std::max(1, static_cast<int>(std::ceil(reach / step)));
    for (int k = 0; k <= n; ++k) {
      if (min_distance(model, Configuration(path[i] + delta * (static_cast<double>(k) / n)), world).d <= 0.0) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace safemm::test
