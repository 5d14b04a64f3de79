#include "safemm/scenario.hpp"

#include "safemm/errors.hpp"
#include "safemm/robots.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>

namespace safemm {

using nlohmann::json;

Vec3 ScriptedObstacle::position_at(double t) const {
  if (waypoints.empty()) return obstacle.position;
  if (t <= waypoints.front().t) return waypoints.front().position;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (t <= waypoints[i].t) {
      const Waypoint& a = waypoints[i - 1];
      const Waypoint& b = waypoints[i];
      const double s = (t - a.t) / (b.t - a.t);
      return a.position + s * (b.position - a.position);
    }
  }
  return waypoints.back().position;
}

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Pick: return "pick";
    case TaskKind::Place: return "place";
    case TaskKind::Handover: return "handover";
  }
  return "unknown";
}

namespace {

// Every reader below reports failures with the JSON path of the entry.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  return Vec3(number(j[0], where), number(j[1], where), number(j[2], where));
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string at = where + "." + key;
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(at + ": expected true or false");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
      throw ConfigError(at + ": expected a non-negative integer");
    }
    out = v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(at + ": expected a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_same_v<T, Vec3>) {
    out = vec3(v, at);
  } else {
    out = number(v, at);
  }
}

Transform pose(const json& j, const std::string& where) {
  check_keys(j, {"xyz", "rpy"}, where);
  Transform tf = Transform::Identity();
  if (j.contains("xyz")) tf.translation() = vec3(j.at("xyz"), where + ".xyz");
  if (j.contains("rpy")) {
    const Vec3 rpy = vec3(j.at("rpy"), where + ".rpy");
    tf.linear() = (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
                   Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
                      .toRotationMatrix();
  }
  return tf;
}

Aabb box(const json& j, const std::string& where) {
  check_keys(j, {"type", "lo", "hi"}, where);
  Aabb b{vec3(j.at("lo"), where + ".lo"), vec3(j.at("hi"), where + ".hi")};
  if (!(b.lo.array() < b.hi.array()).all()) throw ConfigError(where + ": box needs lo < hi on every axis");
  return b;
}

Shape shape(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ConfigError(where + ": shape needs a type");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "box") return box(j, where);
  if (type == "sphere") {
    check_keys(j, {"type", "center", "radius"}, where);
    const double r = number(j.at("radius"), where + ".radius");
    if (!(r > 0.0)) throw ConfigError(where + ": radius must be positive");
    return Sphere{j.contains("center") ? vec3(j.at("center"), where + ".center") : Vec3::Zero(), r};
  }
  if (type == "capsule") {
    check_keys(j, {"type", "a", "b", "radius"}, where);
    const double r = number(j.at("radius"), where + ".radius");
    if (!(r > 0.0)) throw ConfigError(where + ": radius must be positive");
    return Capsule{vec3(j.at("a"), where + ".a"), vec3(j.at("b"), where + ".b"), r};
  }
  throw ConfigError(where + ": unknown shape type '" + type + "'");
}

Obstacle obstacle(const json& j, const std::string& where, ObstacleClass cls) {
  Obstacle o;
  o.id = integer(j.at("id"), where + ".id");
  read(j, "name", o.name, where);
  if (o.name.empty()) o.name = "obstacle" + std::to_string(o.id);
  read(j, "position", o.position, where);
  o.cls = cls;
  if (!j.contains("parts") || !j.at("parts").is_array() || j.at("parts").empty()) {
    throw ConfigError(where + ": obstacle needs a non-empty parts list");
  }
  for (std::size_t i = 0; i < j.at("parts").size(); ++i) {
    o.parts.push_back(shape(j.at("parts")[i], where + ".parts[" + std::to_string(i) + "]"));
  }
  return o;
}

DepthSensorSpec sensor(const json& j, const std::string& where, int id, bool& grasp_camera) {
  check_keys(j, {"name", "kind", "mount_link", "pose", "h_fov", "v_fov", "h_rays", "v_rays", "max_range",
                 "noise_sigma", "grasp_camera"},
             where);
  DepthSensorSpec s;
  s.id = id;
  read(j, "name", s.name, where);
  if (s.name.empty()) s.name = "sensor" + std::to_string(id);
  std::string kind = "depth3d";
  read(j, "kind", kind, where);
  if (kind == "depth3d") {
    s.kind = SensorKind::Depth3D;
  } else if (kind == "line2d") {
    s.kind = SensorKind::LineScan2D;
    s.v_rays = 1;
  } else {
    throw ConfigError(where + ".kind: expected depth3d or line2d");
  }
  read(j, "mount_link", s.mount_link, where);
  if (j.contains("pose")) s.mount = pose(j.at("pose"), where + ".pose");
  read(j, "h_fov", s.h_fov, where);
  read(j, "v_fov", s.v_fov, where);
  read(j, "h_rays", s.h_rays, where);
  read(j, "v_rays", s.v_rays, where);
  read(j, "max_range", s.max_range, where);
  read(j, "noise_sigma", s.noise_sigma, where);
  grasp_camera = false;
  read(j, "grasp_camera", grasp_camera, where);
  return s;
}

void speed(const json& j, SpeedScaleConfig& cfg, const std::string& where) {
  read(j, "d_stop", cfg.d_stop, where);
  read(j, "d_slow", cfg.d_slow, where);
}

void settings(const json& j, SimSettings& s, const std::string& where) {
  check_keys(j, {"sim", "safety", "execution", "prediction", "band", "planner", "smoothing", "tracking", "perception",
                 "workspace"},
             where);
  if (j.contains("sim")) {
    const json& c = j.at("sim");
    const std::string w = where + ".sim";
    check_keys(c, {"nominal_speed", "act_speed", "band_iterations", "replan_after", "give_up_after", "lift_height",
                   "grasp_depth", "max_aperture", "finger_clearance", "handover_dwell", "filter_margin"},
               w);
    read(c, "nominal_speed", s.nominal_speed, w);
    read(c, "act_speed", s.act_speed, w);
    read(c, "band_iterations", s.band_iterations, w);
    read(c, "replan_after", s.replan_after, w);
    read(c, "give_up_after", s.give_up_after, w);
    read(c, "lift_height", s.lift_height, w);
    read(c, "grasp_depth", s.grasp_depth, w);
    read(c, "max_aperture", s.max_aperture, w);
    read(c, "finger_clearance", s.finger_clearance, w);
    read(c, "handover_dwell", s.handover_dwell, w);
    read(c, "filter_margin", s.filter_margin, w);
  }
  if (j.contains("workspace")) {
    const json& c = j.at("workspace");
    const std::string w = where + ".workspace";
    check_keys(c, {"origin", "edge", "depth"}, w);
    read(c, "origin", s.workspace.origin, w);
    read(c, "edge", s.workspace.edge, w);
    read(c, "depth", s.workspace.depth, w);
  }
  if (j.contains("safety")) {
    check_keys(j.at("safety"), {"d_stop", "d_slow"}, where + ".safety");
    speed(j.at("safety"), s.safety, where + ".safety");
  }
  if (j.contains("execution")) {
    const json& c = j.at("execution");
    check_keys(c, {"d_stop", "d_slow", "stop_window"}, where + ".execution");
    speed(c, s.execution.speed, where + ".execution");
    read(c, "stop_window", s.execution.stop_window, where + ".execution");
  }
  if (j.contains("prediction")) {
    const json& c = j.at("prediction");
    check_keys(c, {"horizon", "dt"}, where + ".prediction");
    read(c, "horizon", s.prediction.horizon, where + ".prediction");
    read(c, "dt", s.prediction.dt, where + ".prediction");
  }
  if (j.contains("band")) {
    const json& c = j.at("band");
    const std::string w = where + ".band";
    check_keys(c, {"lambda_int", "lambda_obst", "d_max", "d_cap", "probe", "step_gain", "step_fraction",
                   "max_insert_depth"},
               w);
    read(c, "lambda_int", s.band.lambda_int, w);
    read(c, "lambda_obst", s.band.lambda_obst, w);
    read(c, "d_max", s.band.d_max, w);
    read(c, "d_cap", s.band.d_cap, w);
    read(c, "probe", s.band.probe, w);
    read(c, "step_gain", s.band.step_gain, w);
    read(c, "step_fraction", s.band.step_fraction, w);
    read(c, "max_insert_depth", s.band.max_insert_depth, w);
  }
  if (j.contains("planner")) {
    const json& c = j.at("planner");
    const std::string w = where + ".planner";
    check_keys(c, {"max_iterations", "time_budget", "extension_step", "goal_tolerance", "goal_bias",
                   "approach_trigger", "clearance"},
               w);
    read(c, "max_iterations", s.planner.max_iterations, w);
    read(c, "time_budget", s.planner.time_budget, w);
    read(c, "extension_step", s.planner.extension_step, w);
    read(c, "goal_tolerance", s.planner.goal_tolerance, w);
    read(c, "goal_bias", s.planner.goal_bias, w);
    read(c, "approach_trigger", s.planner.approach_trigger, w);
    read(c, "clearance", s.planner.check.clearance, w);
  }
  if (j.contains("smoothing")) {
    const json& c = j.at("smoothing");
    const std::string w = where + ".smoothing";
    check_keys(c, {"random_budget", "center_min_length", "center_max_depth"}, w);
    read(c, "random_budget", s.smoothing.random_budget, w);
    read(c, "center_min_length", s.smoothing.center_min_length, w);
    read(c, "center_max_depth", s.smoothing.center_max_depth, w);
  }
  if (j.contains("tracking")) {
    const json& c = j.at("tracking");
    const std::string w = where + ".tracking";
    check_keys(c, {"cell", "gate", "process_noise", "measurement_sigma", "base_radius", "k_sigma", "max_misses"}, w);
    read(c, "cell", s.tracking.cell, w);
    read(c, "gate", s.tracking.gate, w);
    read(c, "process_noise", s.tracking.process_noise, w);
    read(c, "measurement_sigma", s.tracking.measurement_sigma, w);
    read(c, "base_radius", s.tracking.base_radius, w);
    read(c, "k_sigma", s.tracking.k_sigma, w);
    read(c, "max_misses", s.tracking.max_misses, w);
  }
  if (j.contains("perception")) {
    const json& c = j.at("perception");
    const std::string w = where + ".perception";
    check_keys(c, {"plane_threshold", "plane_iterations", "min_height", "cluster_radius"}, w);
    read(c, "plane_threshold", s.plane_fit.threshold, w);
    read(c, "plane_iterations", s.plane_fit.iterations, w);
    read(c, "min_height", s.segmentation.min_height, w);
    read(c, "cluster_radius", s.segmentation.cluster_radius, w);
  }
}

TaskSpec task(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ConfigError(where + ": task needs a type");
  }
  TaskSpec t;
  const std::string type = j.at("type").get<std::string>();
  if (type == "pick") {
    check_keys(j, {"type", "name", "region"}, where);
    t.kind = TaskKind::Pick;
    if (!j.contains("region")) throw ConfigError(where + ": pick needs a region");
    t.region = box(j.at("region"), where + ".region");
  } else if (type == "place" || type == "handover") {
    check_keys(j, {"type", "name", "target"}, where);
    t.kind = type == "place" ? TaskKind::Place : TaskKind::Handover;
    if (!j.contains("target")) throw ConfigError(where + ": " + type + " needs a target");
    t.target = vec3(j.at("target"), where + ".target");
  } else {
    throw ConfigError(where + ": unknown task type '" + type + "'");
  }
  read(j, "name", t.name, where);
  if (t.name.empty()) t.name = type;
  return t;
}

}  // namespace

void Scenario::validate() const {
  if (!(tick > 0.0)) throw ConfigError("tick must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (start.size() != static_cast<Eigen::Index>(robot.dof())) {
    throw ConfigError("start configuration has " + std::to_string(start.size()) + " values, the robot has " +
                      std::to_string(robot.dof()) + " degrees of freedom");
  }
  if (!robot.within_limits(start, 1e-9)) throw ConfigError("start configuration violates joint limits");
  std::set<int> ids;
  auto unique_id = [&](int id) {
    if (!ids.insert(id).second) throw ConfigError("duplicate obstacle id " + std::to_string(id));
  };
  for (const auto& o : map) unique_id(o.id);
  for (const auto& s : scripted) {
    unique_id(s.obstacle.id);
    if (s.waypoints.empty()) throw ConfigError("scripted obstacle " + std::to_string(s.obstacle.id) + " has no waypoints");
    for (std::size_t i = 1; i < s.waypoints.size(); ++i) {
      if (!(s.waypoints[i].t > s.waypoints[i - 1].t)) {
        throw ConfigError("waypoint times of obstacle " + std::to_string(s.obstacle.id) + " must increase strictly");
      }
    }
  }
  for (int id : graspable) {
    if (std::none_of(map.begin(), map.end(), [id](const Obstacle& o) { return o.id == id; })) {
      throw ConfigError("graspable id " + std::to_string(id) + " is not a mapped obstacle");
    }
  }
  std::set<int> sensor_ids;
  for (const auto* list : {&sensors, &grasp_cameras}) {
    for (const auto& s : *list) {
      if (!sensor_ids.insert(s.id).second) throw ConfigError("duplicate sensor id " + std::to_string(s.id));
      if (s.mount_link >= static_cast<int>(robot.joint_count()) || s.mount_link < -1) {
        throw ConfigError("sensor '" + s.name + "' is mounted on a link that does not exist");
      }
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sensor '" + s.name + "': " + e.what());
      }
    }
  }
  bool has_pick = false;
  for (const auto& t : tasks) {
    if (t.kind == TaskKind::Pick) has_pick = true;
    if (t.kind != TaskKind::Pick && !has_pick) {
      throw ConfigError("task '" + t.name + "' releases an object before any pick");
    }
    if (t.kind == TaskKind::Pick && grasp_cameras.empty()) {
      throw ConfigError("pick task '" + t.name + "' needs a grasp camera");
    }
  }
  const SimSettings& s = settings;
  if (!(s.nominal_speed > 0.0) || !(s.act_speed > 0.0) || s.band_iterations < 0 || !(s.replan_after > 0.0) ||
      !(s.give_up_after >= s.replan_after) || !(s.lift_height >= 0.0) || !(s.grasp_depth >= 0.0) ||
      !(s.max_aperture > 0.0) || !(s.finger_clearance >= 0.0) || !(s.handover_dwell >= 0.0) ||
      !(s.filter_margin >= 0.0)) {
    throw ConfigError("invalid simulation settings");
  }
  if (!(s.workspace.edge > 0.0) || s.workspace.depth < 1 || s.workspace.depth > 10) {
    throw ConfigError("workspace needs a positive edge and a depth in [1, 10]");
  }
  if (!(s.prediction.horizon > 0.0) || !(s.prediction.dt > 0.0)) throw ConfigError("invalid prediction settings");
  try {
    compute_speed_scale(1.0, 1.0, s.safety);
    compute_speed_scale(1.0, 1.0, s.execution.speed);
    s.band.validate();
    s.planner.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(s.execution.stop_window > 0.0)) throw ConfigError("stop window must be positive");
  if (!(s.tracking.cell > 0.0) || !(s.tracking.gate > 0.0)) throw ConfigError("invalid tracking settings");
  if (!(s.plane_fit.threshold > 0.0) || s.plane_fit.iterations < 1 || !(s.segmentation.cluster_radius > 0.0)) {
    throw ConfigError("invalid perception settings");
  }
}

Scenario scenario_from_json(const json& doc, const std::string& base_dir) {
  check_keys(doc, {"name", "robot", "start", "tick", "duration", "seed", "sensors", "map", "scripted", "tasks",
                   "config"},
             "scenario");
  Scenario s;
  try {
    read(doc, "name", s.name, "scenario");
    s.robot_reference = "builtin:mobile_manipulator";
    read(doc, "robot", s.robot_reference, "scenario");
    std::string reference = s.robot_reference;
    if (reference.rfind("builtin:", 0) != 0) {
      const std::filesystem::path p = std::filesystem::path(base_dir) / reference;
      if (!std::filesystem::exists(p)) throw ConfigError("robot file '" + p.string() + "' not found");
      reference = p.string();
    }
    s.robot = robots::resolve(reference);
    s.start = reference == "builtin:mobile_manipulator" ? robots::mobile_manipulator_home() : s.robot.home();
    if (doc.contains("start")) {
      const json& q = doc.at("start");
      if (!q.is_array()) throw ConfigError("scenario.start: expected an array");
      s.start.resize(static_cast<Eigen::Index>(q.size()));
      for (std::size_t i = 0; i < q.size(); ++i) s.start[static_cast<Eigen::Index>(i)] = number(q[i], "scenario.start");
    }
    read(doc, "tick", s.tick, "scenario");
    read(doc, "duration", s.duration, "scenario");
    read(doc, "seed", s.seed, "scenario");

    int sensor_id = 1;
    for (std::size_t i = 0; i < doc.value("sensors", json::array()).size(); ++i) {
      bool grasp_camera = false;
      auto spec = sensor(doc.at("sensors")[i], "scenario.sensors[" + std::to_string(i) + "]", sensor_id++, grasp_camera);
      (grasp_camera ? s.grasp_cameras : s.sensors).push_back(std::move(spec));
    }
    for (std::size_t i = 0; i < doc.value("map", json::array()).size(); ++i) {
      const json& j = doc.at("map")[i];
      const std::string where = "scenario.map[" + std::to_string(i) + "]";
      check_keys(j, {"id", "name", "position", "parts", "graspable"}, where);
      s.map.push_back(obstacle(j, where, ObstacleClass::Static));
      bool graspable = false;
      read(j, "graspable", graspable, where);
      if (graspable) s.graspable.push_back(s.map.back().id);
    }
    for (std::size_t i = 0; i < doc.value("scripted", json::array()).size(); ++i) {
      const json& j = doc.at("scripted")[i];
      const std::string where = "scenario.scripted[" + std::to_string(i) + "]";
      check_keys(j, {"id", "name", "parts", "waypoints"}, where);
      ScriptedObstacle so;
      so.obstacle = obstacle(j, where, ObstacleClass::Dynamic);
      if (!j.contains("waypoints") || !j.at("waypoints").is_array()) throw ConfigError(where + ": needs waypoints");
      for (std::size_t k = 0; k < j.at("waypoints").size(); ++k) {
        const json& w = j.at("waypoints")[k];
        const std::string at = where + ".waypoints[" + std::to_string(k) + "]";
        check_keys(w, {"t", "position"}, at);
        so.waypoints.push_back({number(w.at("t"), at + ".t"), vec3(w.at("position"), at + ".position")});
      }
      if (!so.waypoints.empty()) so.obstacle.position = so.waypoints.front().position;
      s.scripted.push_back(std::move(so));
    }
    for (std::size_t i = 0; i < doc.value("tasks", json::array()).size(); ++i) {
      s.tasks.push_back(task(doc.at("tasks")[i], "scenario.tasks[" + std::to_string(i) + "]"));
    }
    if (doc.contains("config")) settings(doc.at("config"), s.settings, "scenario.config");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const NotFoundError& e) {
    throw ConfigError(e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return scenario_from_json(doc, dir.empty() ? "." : dir.string());
}

}  // namespace safemm
