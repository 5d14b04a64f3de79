#include "safemm/octree.hpp"

#include "fusion_oracle.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace safemm;

namespace {

GridSpec unit_grid(int depth) {
  GridSpec g;
  g.origin = Vec3::Zero();
  g.edge = 1.0;
  g.depth = depth;
  return g;
}

DepthSensorSpec single_ray_spec(double range) {
  DepthSensorSpec s;
  s.kind = SensorKind::LineScan2D;
  s.h_fov = 1e-3;
  s.h_rays = 1;
  s.v_rays = 1;
  s.max_range = range;
  return s;
}

}  // namespace

TEST_CASE("morton codes round trip") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const VoxelKey k{static_cast<int>(rng.index(1 << 20)), static_cast<int>(rng.index(1 << 20)),
                     static_cast<int>(rng.index(1 << 20))};
    CHECK(morton_decode(morton_encode(k)) == k);
  }
  // Children of a node share its code shifted by three bits.
  CHECK((morton_encode(VoxelKey{5, 3, 6}) >> 3) == morton_encode(VoxelKey{2, 1, 3}));
}

TEST_CASE("grid spec from cube size keeps leaves at least the minimum voxel") {
  const GridSpec g = GridSpec::cube(Vec3::Zero(), 4.0, 0.05);
  CHECK(g.voxel() >= 0.05);
  CHECK(g.voxel() / 2 < 0.05);
  CHECK(g.origin.isApprox(Vec3::Constant(-2.0)));
  CHECK_THROWS_AS(GridSpec::cube(Vec3::Zero(), 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("child nodes partition the parent volume") {
  const GridSpec g = unit_grid(3);
  const Aabb parent = g.node_box(VoxelKey{1, 0, 1}, 1);
  double volume = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const Aabb child = g.box_of(VoxelKey{2 + dx, dy, 2 + dz});
        CHECK(parent.contains(child.lo, 1e-12));
        CHECK(parent.contains(child.hi, 1e-12));
        volume += (child.hi - child.lo).prod();
      }
  CHECK(volume == doctest::Approx((parent.hi - parent.lo).prod()));
}

TEST_CASE("raytrace along an axis visits four cells in order") {
  const GridSpec g = unit_grid(3);  // 0.125 m cells
  const auto keys = raytrace_voxels(Vec3(0.0625, 0.0625, 0.0625), Vec3(0.4375, 0.0625, 0.0625), g);
  REQUIRE(keys.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(keys[static_cast<std::size_t>(i)] == VoxelKey{i, 0, 0});

  const auto back = raytrace_voxels(Vec3(0.4375, 0.0625, 0.0625), Vec3(0.0625, 0.0625, 0.0625), g);
  REQUIRE(back.size() == 4);
  CHECK(back.front() == VoxelKey{3, 0, 0});
  CHECK(back.back() == VoxelKey{0, 0, 0});
}

TEST_CASE("zero-length ray yields its containing voxel") {
  const GridSpec g = unit_grid(3);
  const auto keys = raytrace_voxels(Vec3(0.3, 0.6, 0.9), Vec3(0.3, 0.6, 0.9), g);
  REQUIRE(keys.size() == 1);
  CHECK(keys[0] == VoxelKey{2, 4, 7});
  CHECK(raytrace_voxels(Vec3(2, 2, 2), Vec3(2, 2, 2), g).empty());
}

TEST_CASE("raytrace matches supersampling on random rays") {
  const GridSpec g = unit_grid(4);
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 a = test::random_vec3(rng, -0.2, 1.2);
    const Vec3 b = test::random_vec3(rng, -0.2, 1.2);
    const auto keys = raytrace_voxels(a, b, g);
    const std::set<VoxelKey> traced(keys.begin(), keys.end());
    CHECK(traced.size() == keys.size());

    std::set<VoxelKey> sampled;
    for (int s = 0; s <= 10000; ++s) {
      if (auto k = g.key_of(a + (s / 10000.0) * (b - a))) sampled.insert(*k);
    }
    // Every sampled voxel is traced; traced voxels missed by the samples are
    // only clipped by a sliver shorter than the sample spacing.
    for (const auto& k : sampled) CHECK(traced.count(k) == 1);
    const double spacing = (b - a).norm() / 10000.0;
    for (const auto& k : traced) {
      if (sampled.count(k)) continue;
      const Aabb box = g.box_of(k);
      CHECK(test::segment_overlap(a, b, box.lo, box.hi) * (b - a).norm() <= 2 * spacing);
    }
    // Order: entry parameters are non-decreasing.
    double last = -1.0;
    traverse_voxels(a, b, g, [&](const VoxelKey&, double t0, double t1) {
      CHECK(t0 >= last);
      CHECK(t1 >= t0);
      last = t0;
    });
  }
}

TEST_CASE("single ray hitting mid-range splits into free, point and occluded cells") {
  const GridSpec g = unit_grid(3);
  const DepthSensorSpec spec = single_ray_spec(0.9);
  Transform pose = Transform::Identity();
  pose.translation() = Vec3(0.01, 0.0625, 0.0625);

  PointCloud cloud;
  cloud.points.push_back({Vec3(0.45, 0.0625, 0.0625), PointClass::Obstacle});
  const SensorView view = preprocess_sensor(cloud, pose, spec, g);

  // Marching oracle: sample the ray finely and classify by the hit distance.
  std::set<VoxelKey> before, hit, after;
  for (int s = 0; s <= 9000; ++s) {
    const double t = 0.9 * s / 9000.0;
    const auto k = g.key_of(pose.translation() + t * Vec3::UnitX());
    if (!k) continue;
    if (t < 0.44) before.insert(*k);
    else after.insert(*k);
  }
  hit.insert(*g.key_of(cloud.points[0].position));
  for (const auto& k : hit) before.erase(k);
  for (const auto& k : before) after.erase(k);

  for (const auto& k : before) CHECK(view.free.contains(k));
  for (const auto& k : hit) {
    CHECK(view.points.contains(k));
    CHECK(view.obstacle.contains(k));
  }
  for (const auto& k : after) {
    CHECK(view.obstacle.contains(k));
    if (!hit.count(k)) CHECK_FALSE(view.points.contains(k));
  }
  CHECK(view.free.size() == before.size());
  CHECK(view.obstacle.size() == after.size());
  CHECK(view.robot.empty());
}

TEST_CASE("point beyond the bounds only occludes inside them") {
  const GridSpec g = unit_grid(3);
  const DepthSensorSpec spec = single_ray_spec(3.0);
  Transform pose = Transform::Identity();
  pose.translation() = Vec3(0.5, 0.5, 0.5);
  PointCloud cloud;
  cloud.points.push_back({Vec3(1.5, 0.5, 0.5), PointClass::Obstacle});
  const SensorView view = preprocess_sensor(cloud, pose, spec, g);
  CHECK(view.points.empty());
  CHECK(view.obstacle.empty());
  CHECK(view.free.size() == 4);
}

TEST_CASE("sensor views satisfy the free-space identity") {
  const GridSpec g = unit_grid(4);
  Rng rng(3);
  DepthSensorSpec spec;
  spec.h_fov = 1.2;
  spec.v_fov = 0.9;
  spec.h_rays = 12;
  spec.v_rays = 9;
  spec.max_range = 1.6;
  for (int trial = 0; trial < 20; ++trial) {
    Transform pose = Transform::Identity();
    pose.translation() = test::random_vec3(rng, -0.3, 1.3);
    pose.linear() = test::random_quaternion(rng).toRotationMatrix();
    PointCloud cloud;
    for (const Vec3& dir : sensor_fov_rays(spec)) {
      const double u = rng.uniform();
      const Vec3 p = pose * (rng.uniform(0.1, 1.5) * dir);
      if (u < 0.5) cloud.points.push_back({p, PointClass::Obstacle});
      else if (u < 0.7) cloud.points.push_back({p, PointClass::Robot});
    }
    const SensorView v = preprocess_sensor(cloud, pose, spec, g);
    CHECK(v.points.is_subset_of(v.obstacle));
    CHECK(v.obstacle.is_subset_of(v.fov));
    CHECK(v.robot.is_subset_of(v.fov));
    CHECK(v.free == v.fov - (v.obstacle | v.robot));
  }
}

TEST_CASE("fusion set algebra") {
  const GridSpec g = unit_grid(4);
  Rng rng(11);
  DepthSensorSpec spec;
  spec.h_fov = 1.5;
  spec.v_fov = 1.0;
  spec.h_rays = 10;
  spec.v_rays = 8;
  spec.max_range = 2.0;

  std::vector<SensorView> views;
  for (int s = 0; s < 3; ++s) {
    Transform pose = Transform::Identity();
    pose.translation() = Vec3(0.5, 0.5, 0.5) + 0.9 * test::random_unit(rng);
    pose.linear() = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitX(), Vec3(0.5, 0.5, 0.5) - pose.translation())
                        .toRotationMatrix();
    PointCloud cloud;
    for (const Vec3& dir : sensor_fov_rays(spec)) {
      if (rng.uniform() < 0.6) cloud.points.push_back({pose * (rng.uniform(0.5, 1.3) * dir), PointClass::Obstacle});
    }
    spec.id = s;
    views.push_back(preprocess_sensor(cloud, pose, spec, g));
  }

  SUBCASE("single sensor keeps all of its obstacle space") {
    const Octree tree = fuse({views[0]});
    VoxelSet fused(g);
    for (const auto& k : tree.obstacle_keys()) fused.insert(k);
    CHECK(fused == views[0].obstacle);
    CHECK(tree.count(NodeState::ObstaclePoint) == views[0].points.size());
  }
  SUBCASE("duplicated views are idempotent") {
    const Octree one = fuse({views[0]});
    const Octree two = fuse({views[0], views[0]});
    CHECK(one == two);
  }
  SUBCASE("adding a sensor never grows the occlusion kept from earlier sensors") {
    std::vector<SensorView> used;
    VoxelSet previous(g);
    for (const auto& v : views) {
      used.push_back(v);
      const Octree tree = fuse(used);
      VoxelSet occluded(g);
      for (const auto& k : tree.keys(NodeState::ObstacleOccluded)) occluded.insert(k);
      if (used.size() > 1) CHECK((occluded - v.obstacle).is_subset_of(previous));
      previous = occluded;
      for (const auto& u : used) {
        u.points.for_each([&](const VoxelKey& k) { CHECK(tree.state(k) == NodeState::ObstaclePoint); });
      }
    }
  }
  SUBCASE("fused obstacles lie between the point and occlusion unions") {
    const Octree tree = fuse(views);
    VoxelSet points(g), upper(g), fused(g);
    for (const auto& v : views) {
      points |= v.points;
      upper |= v.obstacle;
    }
    for (const auto& k : tree.obstacle_keys()) fused.insert(k);
    CHECK(points.is_subset_of(fused));
    CHECK(fused.is_subset_of(upper));
  }
  SUBCASE("mismatched grids are rejected") {
    SensorView other = preprocess_sensor(PointCloud{}, Transform::Identity(), spec, unit_grid(3));
    CHECK_THROWS_AS(fuse({views[0], other}), std::invalid_argument);
  }
}

TEST_CASE("fused states match brute-force classification on a 32 cube") {
  const GridSpec g = unit_grid(5);
  Rng rng(21);
  DepthSensorSpec spec;
  spec.h_fov = 1.3;
  spec.v_fov = 1.0;
  spec.h_rays = 20;
  spec.v_rays = 15;
  spec.max_range = 1.8;
  test::FusionOracle oracle(g);

  for (int trial = 0; trial < 3; ++trial) {
    std::vector<SensorView> views;
    std::vector<test::OracleView> oracle_views;
    for (int s = 0; s < 2; ++s) {
      Transform pose = Transform::Identity();
      pose.translation() = Vec3(0.5, 0.5, 0.5) + 0.8 * test::random_unit(rng);
      pose.linear() = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitX(), Vec3(0.5, 0.5, 0.5) - pose.translation())
                          .toRotationMatrix();
      PointCloud cloud;
      test::OracleSensor os;
      os.origin = pose.translation();
      os.max_range = spec.max_range;
      for (const Vec3& dir : sensor_fov_rays(spec)) {
        os.world_rays.push_back(pose.linear() * dir);
        const double u = rng.uniform();
        const Vec3 p = pose * (rng.uniform(0.3, 1.4) * dir);
        if (u < 0.5) cloud.points.push_back({p, PointClass::Obstacle});
        else if (u < 0.6) cloud.points.push_back({p, PointClass::Robot});
      }
      os.points = cloud.points;
      views.push_back(preprocess_sensor(cloud, pose, spec, g));
      oracle_views.push_back(oracle.classify(os));
    }
    const Octree tree = fuse(views);
    const auto expected = oracle.fuse(oracle_views);
    std::size_t mismatches = 0;
    for (int z = 0; z < 32; ++z)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          if (tree.state(VoxelKey{x, y, z}) != expected[oracle.index(x, y, z)]) ++mismatches;
        }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("obstacle cells and dump") {
  const GridSpec g = unit_grid(3);
  Octree tree(g);
  CHECK(obstacle_cells(tree).empty());
  tree.set(VoxelKey{1, 2, 3}, NodeState::ObstaclePoint);
  tree.set(VoxelKey{0, 0, 0}, NodeState::Free);
  const auto boxes = obstacle_cells(tree);
  REQUIRE(boxes.size() == 1);
  CHECK((boxes[0].hi - boxes[0].lo).isApprox(Vec3::Constant(0.125)));
  CHECK(tree.node_has_obstacle(VoxelKey{0, 1, 1}, 1));
  CHECK_FALSE(tree.node_has_obstacle(VoxelKey{1, 1, 1}, 1));
  std::ostringstream out;
  tree.dump(out);
  CHECK(out.str() == "0 0 0 free\n1 2 3 obstacle-point\n");
}
