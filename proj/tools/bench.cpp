#include "bench.hpp"

#include "safemm/elastic_band.hpp"
#include "safemm/octree.hpp"
#include "safemm/path_smoothing.hpp"
#include "safemm/planner.hpp"
#include "safemm/robots.hpp"
#include "safemm/sensor_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>

namespace safemm::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void line(std::ostream& out, const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  out << buf << '\n';
}

Obstacle box(int id, const Vec3& lo, const Vec3& hi) {
  Obstacle o;
  o.id = id;
  o.name = "box" + std::to_string(id);
  o.position = 0.5 * (lo + hi);
  o.parts = {Aabb{lo - o.position, hi - o.position}};
  return o;
}

Obstacle ball(int id, const Vec3& at, double r) {
  Obstacle o;
  o.id = id;
  o.name = "ball" + std::to_string(id);
  o.position = at;
  o.parts = {Sphere{Vec3::Zero(), r}};
  return o;
}

// Two ceiling sensors over a 32^3 grid with three random boxes.
void fusion(std::ostream& out) {
  const GridSpec grid{Vec3(-2.0, -2.0, 0.0), 4.0, 5};
  std::vector<double> times;
  std::size_t obstacle_leaves = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<Obstacle> boxes;
    for (int i = 0; i < 3; ++i) {
      const Vec3 lo(rng.uniform(-1.5, 1.0), rng.uniform(-1.5, 1.0), 0.0);
      boxes.push_back(box(i + 1, lo, lo + Vec3(rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5), rng.uniform(0.3, 1.2))));
    }
    const std::vector<Shape> scene = WorldSnapshot(boxes).collision_shapes();
    std::vector<PointCloud> clouds;
    std::vector<DepthSensorSpec> specs;
    for (int s = 0; s < 2; ++s) {
      DepthSensorSpec spec;
      spec.id = s + 1;
      spec.h_fov = spec.v_fov = 1.6;
      spec.h_rays = spec.v_rays = 48;
      spec.max_range = 5.0;
      spec.mount = Transform::Identity();
      spec.mount.translation() = Vec3(s == 0 ? -1.8 : 1.8, s == 0 ? -1.8 : 1.8, 2.9);
      spec.mount.linear() = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY()).toRotationMatrix();
      clouds.push_back(render_depth(scene, std::vector<RobotShape>{}, spec.mount, spec));
      specs.push_back(spec);
    }
    const auto t0 = Clock::now();
    std::vector<SensorView> views;
    for (int s = 0; s < 2; ++s) views.push_back(preprocess_sensor(clouds[s], specs[s].mount, specs[s], grid));
    const Octree fused = fuse(views);
    times.push_back(1e3 * seconds_since(t0));
    obstacle_leaves += fused.obstacle_keys().size();
  }
  out << "fusion: 20 scenes, 32^3 voxels, 2 sensors of 48x48 rays\n";
  line(out, "  preprocess+fuse ms: median %.3f  mean %.3f  max %.3f", median(times), mean(times),
       *std::max_element(times.begin(), times.end()));
  line(out, "  obstacle leaves per scene: %.1f", static_cast<double>(obstacle_leaves) / 20.0);
}

struct TableProblem {
  RobotModel model = robots::mobile_manipulator();
  WorldSnapshot world{{box(1, Vec3(0.65, -0.7, 0.0), Vec3(1.25, 0.7, 0.7))}};
  Configuration start = robots::mobile_manipulator_home();
  PlannerConfig config;

  TableProblem() {
    start[3] = 1.6;
    Configuration lo = model.lower_limits(), hi = model.upper_limits();
    lo.head<3>() << -1.5, -1.5, -std::numbers::pi;
    hi.head<3>() << 1.5, 1.5, std::numbers::pi;
    config.sample_lower = lo;
    config.sample_upper = hi;
  }

  // End-effector pose of a random arm posture above the table.
  Pose goal(std::uint64_t seed) const {
    Rng rng(seed * 7919 + 13);
    const Configuration home = robots::mobile_manipulator_home();
    for (;;) {
      Configuration q = home;
      for (int j = 3; j < 10; ++j) q[j] += rng.uniform(-0.4, 0.4);
      q = model.clamp(q);
      const Pose p = end_effector_pose(model, q);
      if (p.position.x() > 0.7 && p.position.z() > 0.8 && min_distance(model, q, world).d >= 0.04) return p;
    }
  }
};

void planner(std::ostream& out) {
  const TableProblem problem;
  std::map<std::string, std::vector<double>> times, lengths;
  std::map<std::string, int> successes;
  const JointMetric metric = default_metric(problem.model);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PlannerConfig cfg = problem.config;
    cfg.seed = seed;
    const Pose goal = problem.goal(seed);
    const SmoothingContext ctx(problem.model, problem.world);
    for (const char* name : {"single-stage", "two-stage"}) {
      const bool single = std::string(name) == "single-stage";
      const PlanResult r = single ? plan(problem.model, problem.world, problem.start, goal, cfg)
                                  : plan_two_stage(problem.model, problem.world, problem.start, goal, cfg);
      times[name].push_back(r.stats.seconds);
      if (!r.success()) continue;
      ++successes[name];
      SmoothingOptions opts;
      opts.seed = seed;
      lengths[name].push_back(path_length(smooth_path(r.path, ctx, opts), metric));
    }
  }
  out << "planner: mobile manipulator at a table, 20 seeds\n";
  for (const char* name : {"single-stage", "two-stage"}) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "  %-12s success %2d/20  median time %.3f s  median smoothed length %.3f", name,
                  successes[name], median(times[name]), median(lengths[name]));
    out << buf << '\n';
  }
}

void smoothing(std::ostream& out) {
  const TableProblem problem;
  const WorldSnapshot empty;
  const JointMetric metric = default_metric(problem.model);
  std::vector<double> ratios, times;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PlannerConfig cfg = problem.config;
    cfg.seed = seed;
    const PlanResult r = plan(problem.model, empty, problem.start, problem.goal(seed), cfg);
    if (!r.success()) continue;
    const SmoothingContext ctx(problem.model, empty);
    SmoothingOptions opts;
    opts.seed = seed;
    const auto t0 = Clock::now();
    const Path smoothed = smooth_path(r.path, ctx, opts);
    times.push_back(1e3 * seconds_since(t0));
    const double raw = path_length(r.path, metric);
    if (raw > 0.0) ratios.push_back(path_length(smoothed, metric) / raw);
  }
  out << "smoothing: raw single-stage paths in free space\n";
  line(out, "  paths %.0f  mean length ratio %.3f  median time %.2f ms", static_cast<double>(ratios.size()),
       mean(ratios), median(times));
}

// A ball crosses a straight platform motion; one band step per tick.
void band(std::ostream& out) {
  const RobotModel model = robots::mobile_manipulator();
  Configuration a = robots::mobile_manipulator_home();
  Configuration b = a;
  b[0] = 3.0;
  Path path;
  for (int i = 0; i <= 10; ++i) path.push_back(a + (b - a) * (i / 10.0));
  auto world_at = [](int tick) { return WorldSnapshot({ball(1, Vec3(1.5, -1.5 + 0.02 * tick, 0.6), 0.25)}); };
  ElasticBand eb(model, path, world_at(0));
  std::vector<double> times;
  double min_clearance = kInfiniteDistance;
  int blocked = 0;
  for (int tick = 0; tick < 150; ++tick) {
    const WorldSnapshot w = world_at(tick);
    const auto t0 = Clock::now();
    eb.step(w);
    times.push_back(1e3 * seconds_since(t0));
    min_clearance = std::min(min_clearance, eb.min_clearance());
    if (eb.blockage()) ++blocked;
  }
  out << "band: 10-DoF band, ball crossing over 150 ticks\n";
  line(out, "  step ms: median %.3f  max %.3f", median(times), *std::max_element(times.begin(), times.end()));
  line(out, "  bubbles at end %.0f  min clearance %.3f m  blocked ticks %.0f", static_cast<double>(eb.size()),
       min_clearance, blocked);
}

const std::map<std::string, std::function<void(std::ostream&)>>& table() {
  static const std::map<std::string, std::function<void(std::ostream&)>> t{
      {"fusion", fusion}, {"planner", planner}, {"smoothing", smoothing}, {"band", band}};
  return t;
}

}  // namespace

std::vector<std::string> suites() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : table()) names.push_back(name);
  names.push_back("all");
  return names;
}

bool run_suite(const std::string& name, std::ostream& out) {
  if (name == "all") {
    for (const auto& [n, fn] : table()) fn(out);
    return true;
  }
  const auto it = table().find(name);
  if (it == table().end()) return false;
  it->second(out);
  return true;
}

}  // namespace safemm::bench
