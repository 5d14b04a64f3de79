#include "safemm/collision_world.hpp"
#include "safemm/errors.hpp"
#include "safemm/robots.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace safemm;

namespace {

// One prismatic base plus a point-like link, handy for analytic distances.
RobotModel point_robot(double radius = 0.0) {
  JointSpec x;
  x.name = "x";
  x.kind = JointKind::PlanarTranslationX;
  x.axis = Vec3::UnitX();
  x.lower = -5;
  x.upper = 5;
  x.shapes = {Sphere{Vec3::Zero(), radius}};
  return RobotModel({x}, Transform::Identity());
}

Obstacle sphere_obstacle(int id, const Vec3& at, double r, ObstacleClass cls = ObstacleClass::Static) {
  Obstacle o;
  o.id = id;
  o.parts = {Sphere{Vec3::Zero(), r}};
  o.position = at;
  o.cls = cls;
  return o;
}

Obstacle box_obstacle(int id, const Vec3& lo, const Vec3& hi) {
  Obstacle o;
  o.id = id;
  o.parts = {Aabb{lo, hi}};
  return o;
}

}  // namespace

TEST_CASE("point link against a sphere") {
  const RobotModel robot = point_robot();
  const WorldSnapshot world({sphere_obstacle(1, Vec3(0.5, 0, 0), 0.1)});
  const auto result = min_distance(robot, Configuration::Zero(1), world);
  CHECK(result.d == doctest::Approx(0.4));
  REQUIRE(result.links.size() == 1);
  CHECK(result.links[0].o.isApprox(Vec3(0.4, 0, 0)));
  CHECK(result.links[0].x.norm() < 1e-12);
}

TEST_CASE("empty world is infinitely far") {
  const RobotModel robot = robots::mobile_manipulator();
  const auto result = min_distance(robot, robots::mobile_manipulator_home(), WorldSnapshot{});
  CHECK(std::isinf(result.d));
  CHECK(is_collision_free(robot, robots::mobile_manipulator_home(), WorldSnapshot{}));
}

TEST_CASE("collision test against clearance") {
  const RobotModel robot = point_robot(0.1);
  SUBCASE("touching") {
    const WorldSnapshot world({sphere_obstacle(1, Vec3(0.3, 0, 0), 0.2)});
    CHECK_FALSE(is_collision_free(robot, Configuration::Zero(1), world, 0.0));
  }
  SUBCASE("gap above clearance") {
    const WorldSnapshot world({sphere_obstacle(1, Vec3(0.35, 0, 0), 0.2)});
    CHECK(is_collision_free(robot, Configuration::Zero(1), world, 0.04));
    CHECK_FALSE(is_collision_free(robot, Configuration::Zero(1), world, 0.06));
  }
}

TEST_CASE("capsule against box matches sampled distances") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 a = test::random_vec3(rng, -1, 1);
    const Vec3 b = test::random_vec3(rng, -1, 1);
    const double r = rng.uniform(0.0, 0.1);
    const Vec3 c = test::random_vec3(rng, -1, 1);
    const Vec3 h(rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4));
    const Aabb box{c - h, c + h};
    const double exact = closest_points(RobotShape{Capsule{a, b, r}}, Shape{box}).distance;

    const int samples = 100000;
    double sampled = std::numeric_limits<double>::infinity();
    for (int s = 0; s <= samples; ++s) {
      const Vec3 p = a + (static_cast<double>(s) / samples) * (b - a);
      const Vec3 q = p.cwiseMax(box.lo).cwiseMin(box.hi);
      sampled = std::min(sampled, std::max(0.0, (p - q).norm() - r));
    }
    CHECK(exact <= sampled + 1e-12);
    CHECK(sampled - exact <= (b - a).norm() / samples + 1e-12);
  }
}

TEST_CASE("primitive distances are symmetric") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Sphere s{test::random_vec3(rng, -1, 1), rng.uniform(0, 0.3)};
    const Capsule c{test::random_vec3(rng, -1, 1), test::random_vec3(rng, -1, 1), rng.uniform(0, 0.3)};
    CHECK(closest_points(RobotShape{s}, Shape{c}).distance ==
          doctest::Approx(closest_points(RobotShape{c}, Shape{s}).distance).epsilon(1e-12));
    const Capsule c2{test::random_vec3(rng, -1, 1), test::random_vec3(rng, -1, 1), rng.uniform(0, 0.3)};
    CHECK(closest_points(RobotShape{c2}, Shape{c}).distance ==
          doctest::Approx(closest_points(RobotShape{c}, Shape{c2}).distance).epsilon(1e-12));
  }
}

TEST_CASE("nearest points lie on both geometries") {
  const RobotModel robot = robots::mobile_manipulator();
  Rng rng(8);
  std::vector<Obstacle> obstacles;
  for (int i = 0; i < 6; ++i) {
    const Vec3 c(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.2, 1.5));
    obstacles.push_back(box_obstacle(i, c - Vec3::Constant(0.1), c + Vec3::Constant(0.1)));
  }
  const WorldSnapshot world(obstacles);
  const auto shapes = world.collision_shapes();
  for (int trial = 0; trial < 20; ++trial) {
    const Configuration q = test::random_configuration(robot, rng);
    const auto state = forward_kinematics(robot, q);
    const auto result = min_distance(robot, state, world);
    const auto geometry = link_shapes_world(robot, state);
    double brute = std::numeric_limits<double>::infinity();
    for (const auto& [link, shape] : geometry) {
      for (const auto& o : shapes) brute = std::min(brute, closest_points(shape, o).distance);
    }
    CHECK(result.d == doctest::Approx(brute).epsilon(1e-12));
    for (const auto& l : result.links) {
      if (l.distance == 0.0) continue;
      double on_robot = std::numeric_limits<double>::infinity();
      for (const auto& [link, shape] : geometry) {
        if (link == l.link) on_robot = std::min(on_robot, distance_to_point(shape, l.x));
      }
      double on_obstacle = std::numeric_limits<double>::infinity();
      for (const auto& o : shapes) on_obstacle = std::min(on_obstacle, distance_to_point(o, l.o));
      CHECK(on_robot < 1e-6);
      CHECK(on_obstacle < 1e-6);
      CHECK((l.x - l.o).norm() == doctest::Approx(l.distance).epsilon(1e-9));
      CHECK((state.link_frames[static_cast<std::size_t>(l.link)] * l.x_local).isApprox(l.x, 1e-9));
    }
  }
}

TEST_CASE("adding an obstacle never increases the distance") {
  const RobotModel robot = robots::mobile_manipulator();
  Rng rng(5);
  WorldSnapshot world;
  double previous = kInfiniteDistance;
  const Configuration q = robots::mobile_manipulator_home();
  for (int i = 0; i < 10; ++i) {
    world = world.with_obstacle(sphere_obstacle(i, test::random_vec3(rng, -2, 2), rng.uniform(0.05, 0.3)));
    const double d = min_distance(robot, q, world).d;
    CHECK(d <= previous);
    previous = d;
  }
}

TEST_CASE("octree cells enter distance queries as boxes") {
  GridSpec grid;
  grid.origin = Vec3(-2, -2, -0.5);
  grid.edge = 4.0;
  grid.depth = 5;
  Rng rng(31);
  auto tree = std::make_shared<Octree>(grid);
  for (int i = 0; i < 300; ++i) {
    const VoxelKey k{static_cast<int>(rng.index(32)), static_cast<int>(rng.index(32)), static_cast<int>(rng.index(32))};
    tree->set(k, i % 2 ? NodeState::ObstaclePoint : NodeState::ObstacleOccluded);
  }
  tree->set(VoxelKey{0, 0, 0}, NodeState::Free);
  tree->set(VoxelKey{1, 0, 0}, NodeState::Robot);
  const WorldSnapshot world = WorldSnapshot{}.with_octree(tree);
  const auto cells = obstacle_cells(*tree);

  const RobotModel robot = robots::mobile_manipulator();
  for (int trial = 0; trial < 20; ++trial) {
    const Configuration q = test::random_configuration(robot, rng);
    const auto state = forward_kinematics(robot, q);
    double brute = std::numeric_limits<double>::infinity();
    for (const auto& [link, shape] : link_shapes_world(robot, state)) {
      for (const auto& c : cells) brute = std::min(brute, closest_points(shape, Shape{c}).distance);
    }
    CHECK(min_distance(robot, state, world).d == doctest::Approx(brute).epsilon(1e-12));
  }
  DistanceQueryOptions no_octree;
  no_octree.include_octree = false;
  CHECK(std::isinf(min_distance(robot, robots::mobile_manipulator_home(), world, no_octree).d));
}

TEST_CASE("object reclassification") {
  const RobotModel robot = point_robot(0.05);
  const WorldSnapshot world({sphere_obstacle(1, Vec3(0.5, 0, 0), 0.1), sphere_obstacle(2, Vec3(-1.0, 0, 0), 0.1)});
  const Configuration q = Configuration::Zero(1);
  const Transform link_pose = forward_kinematics(robot, q).link_frames[0];

  const WorldSnapshot attached = attach_object(world, 1, 0, link_pose);
  CHECK(world.obstacle(1).cls == ObstacleClass::Static);
  CHECK(attached.obstacle(1).cls == ObstacleClass::RobotAttached);
  CHECK(min_distance(robot, q, attached).d == doctest::Approx(0.85));

  SUBCASE("attached object moves with its link and is robot geometry") {
    Configuration moved(1);
    moved << -0.3;
    const auto geometry = robot_geometry(robot, forward_kinematics(robot, moved), attached);
    REQUIRE(geometry.size() == 2);
    const auto& s = std::get<Sphere>(geometry[1].second);
    CHECK(s.center.isApprox(Vec3(0.2, 0, 0)));
    // The link is now 0.55 from obstacle 2; the carried sphere stays 1.0 away.
    CHECK(min_distance(robot, moved, attached).d == doctest::Approx(0.55));
  }
  SUBCASE("double attach is idempotent") {
    const WorldSnapshot twice = attach_object(attached, 1, 0, link_pose);
    CHECK(twice.obstacle(1).attach_offset.isApprox(attached.obstacle(1).attach_offset));
    CHECK(twice.obstacles().size() == attached.obstacles().size());
  }
  SUBCASE("release turns it back into an obstacle") {
    const WorldSnapshot released = release_object(attached, 1, Vec3(0.5, 0, 0));
    CHECK(released.obstacle(1).cls == ObstacleClass::Dynamic);
    CHECK(released.obstacles().size() == world.obstacles().size());
    CHECK(min_distance(robot, q, released).d == doctest::Approx(0.35));
  }
  SUBCASE("handled objects are not obstacles") {
    CHECK(min_distance(robot, q, mark_handled(world, 1)).d == doctest::Approx(0.85));
  }
  SUBCASE("unknown ids") {
    CHECK_THROWS_AS(attach_object(world, 9, 0, link_pose), NotFoundError);
    CHECK_THROWS_AS(release_object(world, 9, Vec3::Zero()), NotFoundError);
    CHECK_THROWS_AS(mark_handled(world, 9), NotFoundError);
  }
}

TEST_CASE("speed scale") {
  const SpeedScaleConfig cfg{0.05, 0.5};
  CHECK(compute_speed_scale(0.01, 1.0, cfg) == 0.0);
  CHECK(compute_speed_scale(0.6, 1.0, cfg) == 1.0);
  CHECK(compute_speed_scale(0.275, kInfiniteDistance, cfg) == doctest::Approx(0.5));
  CHECK(compute_speed_scale(1.0, 0.275, cfg) == doctest::Approx(0.5));
  double previous = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double s = compute_speed_scale(i * 1e-3, kInfiniteDistance, cfg);
    CHECK(s >= previous);
    CHECK(s - previous <= 1e-3 / 0.45 + 1e-12);
    previous = s;
  }
  CHECK_THROWS_AS(compute_speed_scale(1, 1, SpeedScaleConfig{0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(compute_speed_scale(1, 1, SpeedScaleConfig{-0.1, 0.5}), std::invalid_argument);
}

TEST_CASE("predicted distance") {
  const RobotModel robot = point_robot();
  const auto still = TimedTrajectory::stationary(Configuration::Zero(1));
  PredictionConfig cfg;
  cfg.floor_z = -1.0;
  cfg.ceiling_z = 1.0;

  SUBCASE("approaching obstacle") {
    cfg.horizon = 1.0;
    std::vector<DiscSample> f{{0.0, Eigen::Vector2d(2, 0), 0.0}, {1.0, Eigen::Vector2d(1, 0), 0.0}};
    CHECK(predicted_min_distance(robot, still, {f}, cfg) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("no tracks") { CHECK(std::isinf(predicted_min_distance(robot, still, {}, cfg))); }
  SUBCASE("invalid horizon") {
    cfg.horizon = 0.0;
    CHECK_THROWS_AS(predicted_min_distance(robot, still, {}, cfg), std::invalid_argument);
  }
  SUBCASE("scripted crossings match dense sampling") {
    const RobotModel arm = robots::mobile_manipulator();
    Rng rng(44);
    cfg.floor_z = 0.0;
    cfg.ceiling_z = 2.0;
    for (int trial = 0; trial < 20; ++trial) {
      TimedTrajectory motion;
      motion.times = {0.0, 1.0, 2.0};
      for (int k = 0; k < 3; ++k) {
        Configuration q = test::random_configuration(arm, rng);
        q[0] *= 0.2;
        q[1] *= 0.2;
        motion.configurations.push_back(q);
      }
      std::vector<std::vector<DiscSample>> forecasts;
      for (int h = 0; h < 2; ++h) {
        const Eigen::Vector2d start(rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Eigen::Vector2d v = 1.5 * Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
        std::vector<DiscSample> f;
        for (int s = 0; s <= 20; ++s) {
          const double t = 0.1 * s;
          f.push_back({t, start + t * v, 0.25 + 0.05 * t});
        }
        forecasts.push_back(f);
      }
      const double fast = predicted_min_distance(arm, motion, forecasts, cfg);
      double dense = kInfiniteDistance;
      for (int ms = 0; ms <= 2000; ++ms) {
        const double t = ms * 1e-3;
        const auto shapes = link_shapes_world(arm, forward_kinematics(arm, motion.at(t)));
        for (const auto& f : forecasts) {
          const Shape volume = forecast_volume(f, t, cfg);
          for (const auto& [link, shape] : shapes) dense = std::min(dense, closest_points(shape, volume).distance);
        }
      }
      CHECK(std::abs(fast - dense) <= 0.02);
    }
  }
}
