#include "safemm/tracking.hpp"

#include "tracking_scenarios.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace safemm;

namespace {

PointCloud cloud_of(int sensor, SensorKind kind, const std::vector<Vec3>& points) {
  PointCloud c;
  c.sensor_id = sensor;
  c.sensor_kind = kind;
  for (const auto& p : points) c.points.push_back({p, PointClass::Obstacle});
  return c;
}

// Points at the centers of the given cells, 1 m above the floor.
PointCloud cells_cloud(const Grid25D& grid, const std::vector<CellKey>& keys, int sensor = 0) {
  std::vector<Vec3> pts;
  for (const auto& k : keys) {
    const Vec2 c = grid.center_of(k);
    pts.emplace_back(c.x(), c.y(), 1.0);
  }
  return cloud_of(sensor, SensorKind::Depth3D, pts);
}

double min_eigenvalue(const Eigen::Matrix4d& p) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(p).eigenvalues().minCoeff();
}

Hypothesis hypothesis_at(const Vec2& c) {
  Hypothesis h;
  h.centroid = c;
  h.cells = {{0, 0}};
  return h;
}

}  // namespace

TEST_CASE("insert_points respects floor and ceiling") {
  Grid25D grid;
  const TrackingConfig cfg;
  grid.insert_points(cloud_of(0, SensorKind::Depth3D,
                              {{0.05, 0.05, cfg.floor_z - 0.01}, {0.05, 0.05, cfg.ceiling_z + 0.01}}));
  CHECK(grid.cells().empty());
  CHECK_THROWS_AS(grid.insert_points(PointCloud{}, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("insert_points accumulates per-sensor density") {
  Grid25D grid;
  std::vector<Vec3> pts(5, Vec3(0.03, 0.04, 0.5));
  grid.insert_points(cloud_of(7, SensorKind::Depth3D, pts));
  REQUIRE(grid.cells().size() == 1);
  const GridCell& c = grid.cells().begin()->second;
  CHECK(c.density.at(7) == doctest::Approx(5.0));
  CHECK(c.density.size() == 1);
}

TEST_CASE("only 3D sensors set heights") {
  Grid25D grid;
  grid.insert_points(cloud_of(0, SensorKind::LineScan2D, {{0.05, 0.05, 0.4}}));
  REQUIRE(grid.cells().size() == 1);
  CHECK_FALSE(grid.cells().begin()->second.height.has_value());
  grid.insert_points(cloud_of(1, SensorKind::Depth3D, {{0.05, 0.05, 1.2}, {0.06, 0.05, 0.9}}));
  const GridCell& c = grid.cells().begin()->second;
  REQUIRE(c.height.has_value());
  CHECK(*c.height == doctest::Approx(1.2 - TrackingConfig{}.floor_z));
  CHECK(c.density.at(0) == doctest::Approx(1.0));
  CHECK(c.density.at(1) == doctest::Approx(2.0));
}

TEST_CASE("non-obstacle points are ignored") {
  Grid25D grid;
  PointCloud c = cloud_of(0, SensorKind::Depth3D, {{0.05, 0.05, 0.5}, {1.05, 0.05, 0.5}});
  c.points[0].cls = PointClass::Robot;
  c.points[1].cls = PointClass::MaxRange;
  grid.insert_points(c);
  CHECK(grid.cells().empty());
}

TEST_CASE("cluster separates distant blobs and joins diagonal neighbours") {
  Grid25D grid;
  grid.insert_points(cells_cloud(grid, {{100, 100}, {101, 100}, {111, 100}, {112, 100}}));
  CHECK(cluster(grid).size() == 2);

  Grid25D diagonal;
  diagonal.insert_points(cells_cloud(diagonal, {{50, 50}, {51, 51}}));
  CHECK(cluster(diagonal).size() == 1);
}

TEST_CASE("L-shaped cluster centroid is the mean of its cell centers") {
  Grid25D grid;
  const std::vector<CellKey> keys{{100, 100}, {100, 101}, {100, 102}, {101, 100}, {102, 100}};
  grid.insert_points(cells_cloud(grid, keys));
  const auto hs = cluster(grid);
  REQUIRE(hs.size() == 1);
  Vec2 expected = Vec2::Zero();
  for (const auto& k : keys) expected += grid.center_of(k);
  expected /= 5.0;
  CHECK((hs[0].centroid - expected).norm() < 1e-12);
  CHECK(hs[0].cells.size() == 5);
  CHECK(hs[0].sensors == std::set<int>{0});
  REQUIRE(hs[0].height.has_value());
}

TEST_CASE("clusters partition the occupied cells") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Grid25D grid;
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 1.8));
    grid.insert_points(cloud_of(0, SensorKind::Depth3D, pts));
    std::set<CellKey> seen;
    std::size_t total = 0;
    for (const auto& h : cluster(grid)) {
      REQUIRE(!h.cells.empty());
      total += h.cells.size();
      for (const auto& k : h.cells) CHECK(seen.insert(k).second);
    }
    CHECK(total == grid.cells().size());
    for (const auto& [k, unused] : grid.cells()) CHECK(seen.count(k) == 1);
  }
}

TEST_CASE("association distance terms") {
  TrackingConfig cfg;
  Hypothesis h;
  h.centroid = Vec2(1.0, 2.0);
  h.density = {{0, 4.0}, {1, 10.0}};
  h.height = 1.7;
  Track o = spawn_track(1, h, 0.0, cfg);
  CHECK(association_distance(h, o, 0.0, cfg) == doctest::Approx(0.0));

  SUBCASE("height ignored without a 3D measurement on both sides") {
    Hypothesis flat = h;
    flat.height.reset();
    o.height = 0.4;
    CHECK(association_distance(flat, o, 0.0, cfg) == doctest::Approx(0.0));
  }

  SUBCASE("hand-computed weighted sum") {
    o.x << 0.0, 0.0, 0.5, -1.0;
    o.time = 1.0;
    o.density = {{0, 6.0}, {2, 3.0}};
    o.height = 1.2;
    // Predicted at t = 3: (1, -2). Only sensor 0 is shared.
    const double expected = cfg.w_position * std::hypot(0.0, 4.0) + cfg.w_density * 2.0 / cfg.density_scale +
                            cfg.w_height * 0.5 / cfg.height_scale;
    CHECK(association_distance(h, o, 3.0, cfg) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("association distance is non-negative") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Hypothesis h = hypothesis_at(Vec2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
    h.density = {{0, rng.uniform(0, 20)}};
    if (rng.uniform() < 0.5) h.height = rng.uniform(0, 2);
    Track o = spawn_track(1, hypothesis_at(Vec2(rng.uniform(-3, 3), rng.uniform(-3, 3))), 0.0);
    o.density = {{0, rng.uniform(0, 20)}};
    o.height = rng.uniform(0, 2);
    CHECK(association_distance(h, o, rng.uniform(0, 1)) >= 0.0);
  }
}

TEST_CASE("associate gates and spawns") {
  TrackingConfig cfg;
  const std::vector<Track> tracks{spawn_track(1, hypothesis_at(Vec2(0, 0)), 0.0, cfg)};
  auto a = associate({hypothesis_at(Vec2(0.3, 0.0))}, tracks, 0.1, cfg);
  REQUIRE(a.matches.size() == 1);
  CHECK(a.unmatched_hypotheses.empty());
  CHECK(a.unmatched_tracks.empty());

  a = associate({hypothesis_at(Vec2(3.0, 0.0))}, tracks, 0.1, cfg);
  CHECK(a.matches.empty());
  CHECK(a.unmatched_hypotheses == std::vector<int>{0});
  CHECK(a.unmatched_tracks == std::vector<int>{0});

  Tracker tracker(cfg);
  tracker.update({hypothesis_at(Vec2(0, 0))}, 0.0);
  tracker.update({hypothesis_at(Vec2(5, 0))}, 0.1);
  CHECK(tracker.tracks().size() == 2);
}

TEST_CASE("assignment matches the exhaustive minimum") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + static_cast<int>(rng.uniform() * 4);
    const int cols = 1 + static_cast<int>(rng.uniform() * 4);
    Eigen::MatrixXd cost(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) cost(i, j) = rng.uniform(0, 10);
    }
    const auto result = min_cost_assignment(cost);
    double got = 0.0;
    std::set<int> used;
    for (int i = 0; i < rows; ++i) {
      if (result[static_cast<std::size_t>(i)] >= 0) {
        got += cost(i, result[static_cast<std::size_t>(i)]);
        CHECK(used.insert(result[static_cast<std::size_t>(i)]).second);
      }
    }
    CHECK(static_cast<int>(used.size()) == std::min(rows, cols));

    // Enumerate injections of the smaller side into the larger one.
    const bool wide = rows <= cols;
    const int small = wide ? rows : cols;
    std::vector<int> perm(static_cast<std::size_t>(wide ? cols : rows));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (int k = 0; k < small; ++k) total += wide ? cost(k, perm[static_cast<std::size_t>(k)]) : cost(perm[static_cast<std::size_t>(k)], k);
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("2x2 association picks the cheaper crossing") {
  TrackingConfig cfg;
  const std::vector<Track> tracks{spawn_track(1, hypothesis_at(Vec2(0, 0)), 0.0, cfg),
                                  spawn_track(2, hypothesis_at(Vec2(0.6, 0)), 0.0, cfg)};
  // Greedy nearest-first would pair h0 with track 2 and leave h1 beyond the gate.
  const auto a = associate({hypothesis_at(Vec2(0.35, 0)), hypothesis_at(Vec2(1.2, 0))}, tracks, 0.0, cfg);
  REQUIRE(a.matches.size() == 2);
  CHECK(a.matches[0] == std::pair<int, int>{0, 0});
  CHECK(a.matches[1] == std::pair<int, int>{1, 1});
}

TEST_CASE("kalman predict and update") {
  TrackingConfig cfg;
  Track t = spawn_track(1, hypothesis_at(Vec2(1, 2)), 0.0, cfg);
  CHECK_THROWS_AS(kalman_predict(t, 0.0, cfg), std::invalid_argument);

  const Track p = kalman_predict(t, 0.5, cfg);
  CHECK((p.position() - Vec2(1, 2)).norm() < 1e-15);
  CHECK(p.time == doctest::Approx(0.5));

  double trace = t.P.topLeftCorner<2, 2>().trace();
  Track cur = t;
  for (int i = 0; i < 20; ++i) {
    cur = kalman_predict(cur, 0.1, cfg);
    const double next = cur.P.topLeftCorner<2, 2>().trace();
    CHECK(next > trace);
    trace = next;
    CHECK(min_eigenvalue(cur.P) >= -1e-9);
    CHECK((cur.P - cur.P.transpose()).norm() < 1e-15);
  }

  Rng rng(9);
  cur = t;
  for (int i = 0; i < 200; ++i) {
    cur = kalman_predict(cur, rng.uniform(0.01, 0.3), cfg);
    CHECK(min_eigenvalue(cur.P) >= -1e-9);
    cur = kalman_update(cur, hypothesis_at(Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1))), cfg);
    CHECK(min_eigenvalue(cur.P) >= -1e-9);
    CHECK((cur.P - cur.P.transpose()).norm() < 1e-15);
  }
}

TEST_CASE("constant-velocity walker converges to its speed") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Track track = test::run_walker(seed);
    CHECK((track.velocity() - Vec2(1.0, 0.0)).norm() <= 0.1);
  }
}

TEST_CASE("occupancy prediction") {
  TrackingConfig cfg;
  SUBCASE("zero velocity and covariance give a constant disc") {
    cfg.process_noise = 0.0;
    Track t;
    t.x << 1.0, -1.0, 0.0, 0.0;
    t.P.setZero();
    const auto discs = predict_occupancy(t, 2.0, 40, cfg);
    REQUIRE(discs.size() == 41);
    for (const auto& d : discs) {
      CHECK((d.center - Vec2(1, -1)).norm() == 0.0);
      CHECK(d.radius == doctest::Approx(cfg.base_radius));
    }
    CHECK(discs.back().t == doctest::Approx(2.0));
  }
  SUBCASE("radius never shrinks and centers extrapolate") {
    const Track t = test::run_walker(4);
    const auto discs = predict_occupancy(t, 2.0, 40, cfg);
    for (std::size_t i = 1; i < discs.size(); ++i) {
      CHECK(discs[i].radius >= discs[i - 1].radius);
      CHECK((discs[i].center - (t.position() + discs[i].t * t.velocity())).norm() < 1e-12);
    }
    CHECK(discs.back().radius > discs.front().radius);
  }
  CHECK_THROWS_AS(predict_occupancy(Track{}, 0.0, 10, cfg), std::invalid_argument);
}

TEST_CASE("Monte-Carlo rollouts stay inside the predicted discs") {
  const Track t = test::run_walker(2);
  const auto c = test::monte_carlo_containment(t, 2.0, 40, 1000, 17);
  CHECK(c.overall >= 0.95);
  CHECK(c.worst >= 0.85);
}

TEST_CASE("is_moving follows the uncertainty-scaled threshold") {
  TrackingConfig cfg;
  Track t;
  t.P = Eigen::Matrix4d::Identity() * 1e-6;
  CHECK_FALSE(is_moving(t, cfg));
  t.x << 0, 0, 1.0, 0.0;
  CHECK(is_moving(t, cfg));

  for (double sigma : {0.0, 0.05, 0.2}) {
    t.P.setZero();
    t.P(2, 2) = sigma * sigma;
    t.P(3, 3) = 0.25 * sigma * sigma;
    const double threshold = cfg.v_min + cfg.k_v * sigma;
    for (double f : {0.5, 0.99, 1.01, 2.0}) {
      t.x << 0, 0, 0.6 * f * threshold, 0.8 * f * threshold;
      CHECK(is_moving(t, cfg) == (f > 1.0));
    }
  }
}

TEST_CASE("tracker drops tracks after repeated misses and confirms steady ones") {
  TrackingConfig cfg;
  Tracker tracker(cfg);
  for (int i = 0; i < 4; ++i) tracker.update({hypothesis_at(Vec2(0.05 * i, 0))}, 0.1 * i);
  REQUIRE(tracker.tracks().size() == 1);
  CHECK(tracker.confirmed().size() == 1);
  const int id = tracker.tracks()[0].id;
  for (int miss = 1; miss < cfg.max_misses; ++miss) {
    tracker.update({}, 0.4 + 0.1 * miss);
    REQUIRE(tracker.tracks().size() == 1);
    CHECK(tracker.tracks()[0].id == id);
  }
  tracker.update({}, 1.0);
  CHECK(tracker.tracks().empty());
}

TEST_CASE("track id survives a crossing between heterogeneous sensors") {
  const auto r = test::run_fov_handoff();
  CHECK(r.seen_by_2d_only);
  CHECK(r.seen_by_3d_only);
  CHECK(r.detected_frames == r.frames);
  CHECK(r.ids.size() == 1);
  // Confirmation takes three frames.
  CHECK(r.followed_frames >= r.frames - 2);
}
