#include "safemm/sim.hpp"

#include "safemm/errors.hpp"
#include "safemm/grasp_perception.hpp"
#include "safemm/path_smoothing.hpp"
#include "safemm/sensor_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace safemm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("trace: '" + s + "' is not a number");
  return v;
}

// Groups of numbers like "1:0.5:2;2:1:1", one group per entry.
std::vector<std::vector<double>> parse_groups(const std::string& s, std::size_t width) {
  std::vector<std::vector<double>> out;
  if (s.empty()) return out;
  for (const auto& group : split(s, ';')) {
    const auto parts = split(group, ':');
    if (parts.size() != width) throw ConfigError("trace: malformed entry '" + group + "'");
    std::vector<double> values;
    for (const auto& p : parts) values.push_back(parse_double(p));
    out.push_back(std::move(values));
  }
  return out;
}

const char* kFixedHead[] = {"tick", "time", "task", "phase"};
const char* kFixedTail[] = {"ee_x",           "ee_y",         "ee_z",           "speed_scale",
                            "min_distance",   "sensed_distance", "predicted_distance", "true_distance",
                            "band_status",    "band_size",    "band_clearance", "tracks",
                            "obstacles",      "band"};

}  // namespace

std::string trace_header(std::size_t dof) {
  std::string h;
  for (const char* c : kFixedHead) h += std::string(h.empty() ? "" : ",") + c;
  for (std::size_t i = 0; i < dof; ++i) h += ",q" + std::to_string(i);
  for (const char* c : kFixedTail) h += std::string(",") + c;
  return h;
}

std::string format_trace_row(const TraceRecord& r) {
  std::string row = std::to_string(r.tick) + "," + fmt(r.time) + "," + std::to_string(r.task) + "," + r.phase;
  for (Eigen::Index i = 0; i < r.q.size(); ++i) row += "," + fmt(r.q[i]);
  row += "," + fmt(r.ee.x()) + "," + fmt(r.ee.y()) + "," + fmt(r.ee.z());
  row += "," + fmt(r.speed_scale) + "," + fmt(r.min_distance) + "," + fmt(r.sensed_distance) + "," +
         fmt(r.predicted_distance) + "," + fmt(r.true_distance);
  row += "," + r.band_status + "," + std::to_string(r.band_size) + "," + fmt(r.band_clearance) + ",";
  for (std::size_t i = 0; i < r.tracks.size(); ++i) {
    const auto& t = r.tracks[i];
    row += (i ? ";" : "") + std::to_string(t.id) + ":" + fmt(t.position.x()) + ":" + fmt(t.position.y()) + ":" +
           fmt(t.velocity.x()) + ":" + fmt(t.velocity.y());
  }
  row += ",";
  for (std::size_t i = 0; i < r.obstacles.size(); ++i) {
    const auto& o = r.obstacles[i];
    row += (i ? ";" : "") + std::to_string(o.id) + ":" + fmt(o.center.x()) + ":" + fmt(o.center.y()) + ":" +
           fmt(o.radius);
  }
  row += ",";
  for (std::size_t i = 0; i < r.band.size(); ++i) {
    row += (i ? ";" : "") + fmt(r.band[i].x()) + ":" + fmt(r.band[i].y());
  }
  return row;
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& rows) {
  const std::size_t dof = rows.empty() ? 0 : static_cast<std::size_t>(rows.front().q.size());
  out << trace_header(dof) << '\n';
  for (const auto& r : rows) out << format_trace_row(r) << '\n';
}

std::vector<TraceRecord> read_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trace is empty");
  const auto header = split(line, ',');
  const std::size_t fixed = std::size(kFixedHead) + std::size(kFixedTail);
  if (header.size() < fixed) throw ConfigError("trace header is too short");
  const std::size_t dof = header.size() - fixed;
  if (trace_header(dof) != line) throw ConfigError("unexpected trace header");

  std::vector<TraceRecord> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) throw ConfigError("trace line " + std::to_string(number) + " has a wrong field count");
    TraceRecord r;
    std::size_t k = 0;
    r.tick = static_cast<long>(parse_double(f[k++]));
    r.time = parse_double(f[k++]);
    r.task = static_cast<int>(parse_double(f[k++]));
    r.phase = f[k++];
    r.q.resize(static_cast<Eigen::Index>(dof));
    for (std::size_t i = 0; i < dof; ++i) r.q[static_cast<Eigen::Index>(i)] = parse_double(f[k++]);
    r.ee.x() = parse_double(f[k++]);
    r.ee.y() = parse_double(f[k++]);
    r.ee.z() = parse_double(f[k++]);
    r.speed_scale = parse_double(f[k++]);
    r.min_distance = parse_double(f[k++]);
    r.sensed_distance = parse_double(f[k++]);
    r.predicted_distance = parse_double(f[k++]);
    r.true_distance = parse_double(f[k++]);
    r.band_status = f[k++];
    r.band_size = static_cast<int>(parse_double(f[k++]));
    r.band_clearance = parse_double(f[k++]);
    for (const auto& g : parse_groups(f[k++], 5)) {
      r.tracks.push_back({static_cast<int>(g[0]), Vec2(g[1], g[2]), Vec2(g[3], g[4])});
    }
    for (const auto& g : parse_groups(f[k++], 4)) r.obstacles.push_back({static_cast<int>(g[0]), Vec2(g[1], g[2]), g[3]});
    for (const auto& g : parse_groups(f[k++], 2)) r.band.emplace_back(g[0], g[1]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TraceRecord> read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace '" + path + "'");
  return read_trace(in);
}

TraceMetrics compute_metrics(const std::vector<TraceRecord>& rows) {
  TraceMetrics m;
  m.ticks = rows.size();
  std::size_t active = 0, stopped = 0;
  bool done = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0) {
      if (rows[i - 1].q.size() == r.q.size()) m.path_length += (r.q - rows[i - 1].q).norm();
      m.ee_path_length += (r.ee - rows[i - 1].ee).norm();
    }
    m.min_clearance = std::min(m.min_clearance, r.min_distance);
    m.min_true_clearance = std::min(m.min_true_clearance, r.true_distance);
    if (r.speed_scale > 0.0) m.min_moving_clearance = std::min(m.min_moving_clearance, r.min_distance);
    if (r.phase == "move" || r.phase == "act") {
      ++active;
      if (r.speed_scale <= 0.0) ++stopped;
    }
    if (!done && r.phase == "done") {
      m.makespan = r.time;
      done = true;
    }
  }
  if (!done && !rows.empty()) m.makespan = rows.back().time;
  m.stop_fraction = active ? static_cast<double>(stopped) / static_cast<double>(active) : 0.0;
  return m;
}

std::string format_metrics(const TraceMetrics& m) {
  std::ostringstream out;
  out << "ticks " << m.ticks << '\n'
      << "path_length " << fmt(m.path_length) << '\n'
      << "ee_path_length " << fmt(m.ee_path_length) << '\n'
      << "makespan " << fmt(m.makespan) << '\n'
      << "min_clearance " << fmt(m.min_clearance) << '\n'
      << "min_true_clearance " << fmt(m.min_true_clearance) << '\n'
      << "min_moving_clearance " << fmt(m.min_moving_clearance) << '\n'
      << "stop_fraction " << fmt(m.stop_fraction) << '\n';
  return out.str();
}

const char* to_string(TaskStatus status) {
  switch (status) {
    case TaskStatus::Pending: return "pending";
    case TaskStatus::Active: return "active";
    case TaskStatus::Succeeded: return "succeeded";
    case TaskStatus::Failed: return "failed";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

namespace {

enum class Phase { Perceive, Plan, Move, Act, Done };

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Perceive: return "perceive";
    case Phase::Plan: return "plan";
    case Phase::Move: return "move";
    case Phase::Act: return "act";
    case Phase::Done: return "done";
  }
  return "unknown";
}

enum class ActEvent { None, Grip, Attach, Open, Settle };

struct ActSegment {
  Pose from;
  Pose to;
  ActEvent event = ActEvent::None;
};

Vec3 part_bottom_center(const Obstacle& o, const Vec3& position) {
  Aabb b = bounds_of(translated(o.parts.front(), position));
  for (const auto& p : o.parts) {
    const Aabb pb = bounds_of(translated(p, position));
    b.lo = b.lo.cwiseMin(pb.lo);
    b.hi = b.hi.cwiseMax(pb.hi);
  }
  return Vec3(0.5 * (b.lo.x() + b.hi.x()), 0.5 * (b.lo.y() + b.hi.y()), b.lo.z());
}

Footprint footprint(const Obstacle& o, const Vec3& position) {
  Aabb b = bounds_of(translated(o.parts.front(), position));
  for (const auto& p : o.parts) {
    const Aabb pb = bounds_of(translated(p, position));
    b.lo = b.lo.cwiseMin(pb.lo);
    b.hi = b.hi.cwiseMax(pb.hi);
  }
  const Vec3 c = b.center();
  return {o.id, Vec2(c.x(), c.y()), 0.5 * (b.hi - b.lo).head<2>().norm()};
}

// Hand pointing down, fingers closing along the given ground-plane angle.
Eigen::Quaterniond downward_hand(double closing_yaw) {
  double yaw = closing_yaw - std::numbers::pi / 2.0;
  yaw = std::remainder(yaw, std::numbers::pi);  // closing is symmetric under a half turn
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitY()));
}

}  // namespace

struct Simulator::State {
  RobotModel model;
  Configuration q;
  WorldSnapshot map;
  WorldSnapshot world;
  WorldSnapshot sensed;
  WorldSnapshot truth;
  Tracker tracker;
  Rng noise;
  long tick = 0;
  double time = 0.0;
  std::size_t task = 0;
  Phase phase = Phase::Done;
  double task_started = 0.0;
  int ee_link = 0;

  std::optional<ElasticBand> band;
  Pose goal;
  double blocked_for = 0.0;
  double next_plan_at = 0.0;

  int held = -1;
  bool follows_hand = false;
  Vec3 hand_offset = Vec3::Zero();
  Vec3 tcp_to_bottom = Vec3::Zero();
  Eigen::Quaterniond grasp_orientation = Eigen::Quaterniond::Identity();

  std::vector<ActSegment> act;
  std::size_t act_index = 0;
  double act_progress = 0.0;
  double dwell_left = 0.0;
  double act_blocked_for = 0.0;

  std::function<void(const std::string&)> log;
};

Simulator::Simulator(Scenario scenario) : scenario_(std::move(scenario)), state_(std::make_unique<State>()) {
  scenario_.validate();
  State& s = *state_;
  s.model = scenario_.robot;
  s.q = scenario_.start;
  s.map = WorldSnapshot(scenario_.map);
  s.tracker = Tracker(scenario_.settings.tracking);
  s.noise = Rng(scenario_.seed * 0x9E3779B97F4A7C15ULL + 17);
  s.ee_link = static_cast<int>(s.model.joint_count()) - 1;
  for (const auto& t : scenario_.tasks) outcomes_.push_back({t.name, t.kind, TaskStatus::Pending, "", 0, 0.0});
  s.phase = Phase::Done;
  s.task = 0;
}

Simulator::~Simulator() = default;

const Configuration& Simulator::configuration() const { return state_->q; }
const WorldSnapshot& Simulator::map_world() const { return state_->map; }
const WorldSnapshot& Simulator::perceived_world() const { return state_->world; }
const ElasticBand* Simulator::band() const { return state_->band ? &*state_->band : nullptr; }
double Simulator::time() const { return state_->time; }
void Simulator::set_logger(std::function<void(const std::string&)> logger) { state_->log = std::move(logger); }

bool Simulator::finished() const {
  const State& s = *state_;
  const bool tasks_done = !scenario_.tasks.empty() && s.task >= scenario_.tasks.size();
  return tasks_done || s.time >= scenario_.duration - 1e-9;
}

TraceRecord Simulator::tick() {
  State& s = *state_;
  const SimSettings& cfg = scenario_.settings;
  const double t = s.time;
  auto log = [&](const std::string& msg) {
    if (s.log) s.log("t=" + fmt(t) + " " + msg);
  };

  // Current geometry of held objects and scripted obstacles.
  KinematicState ks = forward_kinematics(s.model, s.q);
  auto object_position = [&](const Obstacle& o) {
    if (o.cls == ObstacleClass::RobotAttached) {
      return Vec3(ks.link_frames.at(static_cast<std::size_t>(o.attached_link)) * o.attach_offset);
    }
    return o.position;
  };
  std::vector<Obstacle> truth = s.map.obstacles();
  for (auto& o : truth) o.position = object_position(o);
  std::vector<Obstacle> mapped = truth;
  for (const auto& so : scenario_.scripted) {
    Obstacle o = so.obstacle;
    o.position = so.position_at(t);
    truth.push_back(std::move(o));
  }
  s.truth = s.map.with_obstacles(truth);

  // Sensing, robot and map point attribution, fusion, tracking.
  std::vector<Shape> scene;
  std::vector<Shape> held_shapes, map_shapes;
  for (const auto& o : truth) {
    for (auto& p : o.world_parts()) {
      scene.push_back(p);
      if (o.cls == ObstacleClass::HandledObject || o.cls == ObstacleClass::RobotAttached) held_shapes.push_back(p);
    }
  }
  for (const auto& o : mapped) {
    if (o.cls != ObstacleClass::Static && o.cls != ObstacleClass::Dynamic) continue;
    for (auto& p : o.world_parts()) map_shapes.push_back(p);
  }
  const auto robot_shapes = robot_shapes_world(s.model, ks);
  auto attribute = [&](PointCloud cloud, bool drop_map) {
    for (auto& p : cloud.points) {
      if (p.cls != PointClass::Obstacle) continue;
      bool robot = false;
      for (const auto& r : robot_shapes) robot = robot || distance_to_point(r, p.position) <= cfg.filter_margin;
      for (const auto& h : held_shapes) robot = robot || distance_to_point(h, p.position) <= cfg.filter_margin;
      bool known = false;
      if (drop_map && !robot) {
        for (const auto& m : map_shapes) known = known || distance_to_point(m, p.position) <= cfg.filter_margin;
      }
      // Mapped geometry is modelled exactly; its points and their shadow
      // are accounted for like the robot's, neither free nor obstacle.
      if (robot || known) p.cls = PointClass::Robot;
    }
    return cloud;
  };

  std::vector<SensorView> views;
  Grid25D grid(cfg.tracking);
  for (const auto& spec : scenario_.sensors) {
    const Transform pose = sensor_world_pose(spec, ks);
    PointCloud cloud = attribute(render_depth(scene, robot_shapes, pose, spec, &s.noise), true);
    cloud.sensor_id = spec.id;
    views.push_back(preprocess_sensor(cloud, pose, spec, cfg.workspace, t));
    grid.insert_points(cloud);
  }
  auto octree = views.empty() ? nullptr : std::make_shared<const Octree>(fuse(views));
  s.world = s.map.with_octree(octree);
  {
    std::vector<Obstacle> carried;
    for (const auto& o : s.map.obstacles()) {
      if (o.cls == ObstacleClass::RobotAttached) carried.push_back(o);
    }
    s.sensed = s.world.with_obstacles(std::move(carried));
  }
  s.tracker.update(cluster(grid), t);

  const RobotModel active = carrying_model(s.model, s.map);
  auto fail_task = [&](const std::string& reason) {
    auto& out = outcomes_[s.task];
    out.status = TaskStatus::Failed;
    out.reason = reason;
    out.finished_at = t;
    log("task " + std::to_string(s.task) + " " + out.name + " failed: " + reason);
    s.band.reset();
    s.phase = Phase::Done;
    ++s.task;
  };
  auto succeed_task = [&]() {
    auto& out = outcomes_[s.task];
    out.status = TaskStatus::Succeeded;
    out.finished_at = t;
    log("task " + std::to_string(s.task) + " " + out.name + " succeeded");
    s.band.reset();
    s.phase = Phase::Done;
    ++s.task;
  };

  // Start the next task when idle.
  while (s.phase == Phase::Done && s.task < scenario_.tasks.size()) {
    const TaskSpec& task = scenario_.tasks[s.task];
    outcomes_[s.task].status = TaskStatus::Active;
    s.task_started = t;
    s.next_plan_at = t;
    s.blocked_for = 0.0;
    log("task " + std::to_string(s.task) + " " + task.name + " started");
    if (task.kind == TaskKind::Pick) {
      if (s.held >= 0) {
        fail_task("the hand is not empty");
        continue;
      }
      s.phase = Phase::Perceive;
    } else {
      if (s.held < 0) {
        fail_task("no object in the hand");
        continue;
      }
      const Vec3 tcp = task.kind == TaskKind::Place ? Vec3(task.target + s.tcp_to_bottom) : task.target;
      s.goal.position = tcp + (task.kind == TaskKind::Place ? cfg.lift_height : 0.0) * Vec3::UnitZ();
      s.goal.orientation = s.grasp_orientation;
      s.phase = Phase::Plan;
    }
  }

  if (s.phase == Phase::Perceive) {
    const TaskSpec& task = scenario_.tasks[s.task];
    try {
      std::vector<Vec3> points;
      for (const auto& spec : scenario_.grasp_cameras) {
        const Transform pose = sensor_world_pose(spec, ks);
        const PointCloud cloud = attribute(render_depth(scene, robot_shapes, pose, spec, &s.noise), false);
        for (const Vec3& p : obstacle_points(cloud)) {
          if (task.region.contains(p)) points.push_back(p);
        }
      }
      PlaneFitConfig plane_cfg = cfg.plane_fit;
      plane_cfg.seed = scenario_.seed + s.task;
      const PlaneModel plane = fit_plane(points, plane_cfg);
      const auto clusters = segment_objects(points, plane, cfg.segmentation);
      if (clusters.empty()) throw InsufficientDataError("no object above the surface");
      const Vec3 center = task.region.center();
      std::size_t pick = 0;
      double best = kInfiniteDistance;
      for (std::size_t i = 0; i < clusters.size(); ++i) {
        Vec3 c = Vec3::Zero();
        for (const auto& p : clusters[i]) c += p;
        c /= static_cast<double>(clusters[i].size());
        const double d = (c - center).head<2>().norm();
        if (d < best) {
          best = d;
          pick = i;
        }
      }
      const ObjectBox box = fit_bounding_box(clusters[pick], plane);
      const GraspSpec grasp = select_grasp(box, cfg.max_aperture, cfg.finger_clearance);

      // The perceived box must correspond to a known graspable object.
      int object = -1;
      double nearest = kInfiniteDistance;
      for (int id : scenario_.graspable) {
        const Obstacle& o = s.map.obstacle(id);
        if (o.cls != ObstacleClass::Static && o.cls != ObstacleClass::Dynamic) continue;
        const double d = (o.position - box.center).head<2>().norm();
        if (d < nearest) {
          nearest = d;
          object = id;
        }
      }
      const double tolerance = 0.5 * std::max(box.extents.x(), box.extents.y());
      if (object < 0 || nearest > tolerance) throw NotFoundError("perceived object matches no graspable object");

      const double depth = std::min(cfg.grasp_depth, 0.5 * box.extents.z());
      const Vec3 tcp = box.center + box.normal * (box.extents.z() - depth);
      s.grasp_orientation = downward_hand(grasp.closing_yaw);
      s.goal = Pose{tcp + cfg.lift_height * Vec3::UnitZ(), s.grasp_orientation};
      const Obstacle& o = s.map.obstacle(object);
      s.tcp_to_bottom = tcp - part_bottom_center(o, o.position);
      s.held = object;
      s.map = mark_handled(s.map, object);
      s.world = s.map.with_octree(octree);
      log("located object " + std::to_string(object) + " (aperture " + fmt(grasp.aperture) + " m)");
      s.phase = Phase::Plan;
    } catch (const std::exception& e) {
      fail_task(std::string("perception: ") + e.what());
    }
  }

  auto plan_band = [&]() {
    PlannerConfig pc = cfg.planner;
    auto& out = outcomes_[s.task];
    pc.seed = scenario_.seed * 1000003ULL + s.task * 1009ULL + static_cast<std::uint64_t>(out.plans);
    Configuration lo = active.lower_limits(), hi = active.upper_limits();
    const Aabb bounds = cfg.workspace.bounds();
    for (std::size_t d = 0; d < active.dof(); ++d) {
      const auto kind = active.joint(static_cast<std::size_t>(active.dof_joints()[d])).kind;
      const auto i = static_cast<Eigen::Index>(d);
      if (kind == JointKind::PlanarTranslationX) {
        lo[i] = std::max(lo[i], bounds.lo.x());
        hi[i] = std::min(hi[i], bounds.hi.x());
      } else if (kind == JointKind::PlanarTranslationY) {
        lo[i] = std::max(lo[i], bounds.lo.y());
        hi[i] = std::min(hi[i], bounds.hi.y());
      }
    }
    pc.sample_lower = lo;
    pc.sample_upper = hi;
    // A start closer than the planning margin would be rejected; relax the
    // margin to what the robot has, but keep it above the stop distance.
    const double here = min_distance(active, s.q, s.world).d;
    if (here < pc.check.clearance) pc.check.clearance = std::max(0.5 * (here + cfg.safety.d_stop), 0.9 * here);
    ++out.plans;
    const PlanResult r = plan(active, s.world, s.q, s.goal, pc);
    if (!r.success()) {
      log(std::string("planning failed: ") + to_string(r.status));
      return false;
    }
    const SmoothingContext ctx(active, s.world, pc.metric.weights.size() ? pc.metric : default_metric(active), pc.check);
    SmoothingOptions so = cfg.smoothing;
    so.seed = pc.seed;
    const Path smooth = smooth_path(r.path, ctx, so);
    s.band.emplace(active, smooth, s.world, cfg.band);
    log("planned " + std::to_string(r.path.size()) + " vertices, " + std::to_string(s.band->size()) + " bubbles");
    return true;
  };

  if (s.phase == Phase::Plan && t + 1e-12 >= s.next_plan_at) {
    if (plan_band()) {
      s.phase = Phase::Move;
      s.blocked_for = 0.0;
    } else if (t - s.task_started + cfg.replan_after > cfg.give_up_after) {
      fail_task("no path to the goal");
    } else {
      s.next_plan_at = t + cfg.replan_after;
    }
  }

  // Start the act once the band end is reached.
  auto begin_act = [&]() {
    const TaskSpec& task = scenario_.tasks[s.task];
    s.band.reset();
    s.act.clear();
    s.act_index = 0;
    s.act_progress = 0.0;
    s.act_blocked_for = 0.0;
    s.dwell_left = 0.0;
    const Pose here = Pose::from_transform(forward_kinematics(s.model, s.q).end_effector);
    const Pose down{here.position - cfg.lift_height * Vec3::UnitZ(), here.orientation};
    if (task.kind == TaskKind::Pick) {
      s.act = {{here, down, ActEvent::Grip}, {down, here, ActEvent::Attach}};
    } else {
      // The object leaves the carrying model and moves with the hand until released.
      const KinematicState now = forward_kinematics(s.model, s.q);
      const Obstacle& o = s.map.obstacle(s.held);
      const Vec3 position = now.link_frames.at(static_cast<std::size_t>(o.attached_link)) * o.attach_offset;
      s.map = mark_handled(s.map, s.held).with_obstacle_position(s.held, position);
      s.follows_hand = true;
      s.hand_offset = position - here.position;
      if (task.kind == TaskKind::Place) {
        s.act = {{here, down, ActEvent::Open}, {down, here, ActEvent::Settle}};
      } else {
        s.follows_hand = false;
        s.held = -1;
        s.dwell_left = cfg.handover_dwell;
      }
    }
    s.phase = Phase::Act;
  };

  // Motion decision at the current configuration.
  TraceRecord rec;
  rec.tick = s.tick;
  rec.time = t;
  rec.q = s.q;
  rec.ee = ks.end_effector.translation();
  rec.min_distance = min_distance(s.model, ks, s.world).d;
  rec.sensed_distance = min_distance(s.model, ks, s.sensed).d;
  rec.true_distance = min_distance(s.model, ks, s.truth, DistanceQueryOptions{kInfiniteDistance, false}).d;

  std::vector<std::vector<DiscSample>> forecasts;
  const int steps = std::max(1, static_cast<int>(std::ceil(cfg.prediction.horizon / cfg.prediction.dt)));
  for (const Track& track : s.tracker.confirmed()) {
    if (is_moving(track, cfg.tracking)) forecasts.push_back(predict_occupancy(track, cfg.prediction.horizon, steps, cfg.tracking));
    rec.tracks.push_back({track.id, track.position(), track.velocity()});
  }
  TimedTrajectory motion = TimedTrajectory::stationary(s.q);

  double scale = 0.0;
  if (s.phase == Phase::Move) {
    ElasticBand& band = *s.band;
    band.set_start(s.q, s.world);
    for (int i = 0; i < cfg.band_iterations; ++i) band.step(s.world);
    if (cfg.band_iterations == 0) band.refresh(s.world), band.maintain(s.world);
    const ExecutionDecision decision = check_execution(band, 0, cfg.execution);
    double elapsed = 0.0;
    motion.times = {0.0};
    motion.configurations = {band.bubbles().front().q};
    for (std::size_t i = 1; i < band.size(); ++i) {
      elapsed += band.metric().distance(band.bubbles()[i - 1].q, band.bubbles()[i].q) / cfg.nominal_speed;
      if (elapsed <= motion.times.back()) continue;
      motion.times.push_back(elapsed);
      motion.configurations.push_back(band.bubbles()[i].q);
    }
    rec.predicted_distance = predicted_min_distance(active, motion, forecasts, cfg.prediction);
    scale = std::min(decision.speed_scale, compute_speed_scale(rec.sensed_distance, rec.predicted_distance, cfg.safety));
    rec.band_status = to_string(decision.status);
    rec.band_size = static_cast<int>(band.size());
    rec.band_clearance = band.min_clearance();
    for (const auto& b : band.bubbles()) {
      const Vec3 p = forward_kinematics(band.model(), b.q).end_effector.translation();
      rec.band.emplace_back(p.x(), p.y());
    }
    if (band.blockage()) {
      s.blocked_for += scenario_.tick;
    } else {
      s.blocked_for = 0.0;
    }
  } else if (s.phase == Phase::Act && s.act_index < s.act.size()) {
    rec.predicted_distance = predicted_min_distance(active, motion, forecasts, cfg.prediction);
    scale = compute_speed_scale(rec.sensed_distance, rec.predicted_distance, cfg.safety);
  } else {
    rec.predicted_distance = predicted_min_distance(active, motion, forecasts, cfg.prediction);
  }
  if (rec.min_distance <= cfg.safety.d_stop) scale = 0.0;
  rec.speed_scale = scale;
  rec.phase = phase_name(s.phase);
  rec.task = static_cast<int>(s.task);
  for (const auto& o : truth) rec.obstacles.push_back(footprint(o, o.position));

  // Execute.
  if (s.phase == Phase::Move) {
    ElasticBand& band = *s.band;
    double remaining = scale * cfg.nominal_speed * scenario_.tick;
    const auto& b = band.bubbles();
    Configuration q = b.front().q;
    std::size_t k = 0;
    while (remaining > 0.0 && k + 1 < b.size()) {
      const double len = band.metric().distance(q, b[k + 1].q);
      if (remaining >= len) {
        remaining -= len;
        q = b[k + 1].q;
        ++k;
      } else {
        q = q + (b[k + 1].q - q) * (remaining / len);
        remaining = 0.0;
      }
    }
    s.q = q;
    if (k + 1 >= b.size()) {
      begin_act();
    } else {
      band.set_start(s.q, s.world, k);
      if (s.blocked_for >= cfg.give_up_after) {
        fail_task("path blocked");
      } else if (s.blocked_for >= cfg.replan_after && t + 1e-12 >= s.next_plan_at) {
        log("band blocked, replanning");
        s.next_plan_at = t + cfg.replan_after;
        plan_band();
      }
    }
  } else if (s.phase == Phase::Act) {
    if (s.act_index < s.act.size()) {
      ActSegment& seg = s.act[s.act_index];
      const double length = (seg.to.position - seg.from.position).norm();
      const double next = std::min(length, s.act_progress + scale * cfg.act_speed * scenario_.tick);
      bool moved = false;
      if (next > s.act_progress || length == 0.0) {
        const Pose target = interpolate(seg.from, seg.to, length > 0.0 ? next / length : 1.0);
        const JointMetric metric = default_metric(active);
        const IkResult ik = solve_ik(active, s.q, target, metric, 1e-4, 20);
        if (min_distance(s.model, forward_kinematics(s.model, ik.q), s.world).d > cfg.safety.d_stop) {
          s.q = ik.q;
          s.act_progress = next;
          moved = true;
        }
      }
      if (!moved && scale > 0.0) {
        s.act_blocked_for += scenario_.tick;
        if (s.act_blocked_for >= cfg.give_up_after) fail_task("act motion blocked");
      } else {
        s.act_blocked_for = 0.0;
      }
      const Vec3 tcp = forward_kinematics(s.model, s.q).end_effector.translation();
      if (s.phase == Phase::Act && s.follows_hand && s.held >= 0) {
        s.map = s.map.with_obstacle_position(s.held, tcp + s.hand_offset);
      }
      if (s.phase == Phase::Act && s.act_progress >= length) {
        const KinematicState now = forward_kinematics(s.model, s.q);
        switch (seg.event) {
          case ActEvent::Grip: {
            s.follows_hand = true;
            s.hand_offset = s.map.obstacle(s.held).position - tcp;
            break;
          }
          case ActEvent::Attach:
            s.follows_hand = false;
            s.map = attach_object(s.map, s.held, s.ee_link, now.link_frames.at(static_cast<std::size_t>(s.ee_link)));
            break;
          case ActEvent::Open:
            s.follows_hand = false;
            break;
          case ActEvent::Settle:
            s.map = release_object(s.map, s.held, s.map.obstacle(s.held).position);
            s.held = -1;
            break;
          case ActEvent::None:
            break;
        }
        ++s.act_index;
        s.act_progress = 0.0;
      }
    }
    if (s.phase == Phase::Act && s.act_index >= s.act.size()) {
      if (s.dwell_left > 0.0) {
        s.dwell_left -= scenario_.tick;
      } else {
        succeed_task();
      }
    }
  }

  ++s.tick;
  s.time = static_cast<double>(s.tick) * scenario_.tick;
  if (s.task >= scenario_.tasks.size() && !scenario_.tasks.empty()) s.phase = Phase::Done;
  return rec;
}

RunResult run_scenario(Scenario scenario, const RunOptions& options) {
  if (options.seed) scenario.seed = *options.seed;
  Simulator sim(std::move(scenario));
  if (options.logger) sim.set_logger(options.logger);
  RunResult result;
  auto room = [&]() { return !options.max_ticks || static_cast<long>(result.trace.size()) < *options.max_ticks; };
  while (!sim.finished() && room()) result.trace.push_back(sim.tick());
  // A last row records the state after the final motion.
  if (sim.finished() && room()) result.trace.push_back(sim.tick());
  result.tasks = sim.tasks();
  result.exit_code = 0;
  for (auto& t : result.tasks) {
    if (t.status != TaskStatus::Succeeded) {
      if (t.status != TaskStatus::Failed) {
        t.status = TaskStatus::Failed;
        t.reason = "not finished";
      }
      result.exit_code = 2;
    }
  }
  result.metrics = compute_metrics(result.trace);
  return result;
}

}  // namespace safemm
