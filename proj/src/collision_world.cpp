#include "safemm/collision_world.hpp"

#include "safemm/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace safemm {

const char* to_string(ObstacleClass cls) {
  switch (cls) {
    case ObstacleClass::Static:
      return "static";
    case ObstacleClass::Dynamic:
      return "dynamic";
    case ObstacleClass::HandledObject:
      return "handled-object";
    case ObstacleClass::RobotAttached:
      return "robot-attached";
  }
  return "static";
}

ObstacleClass obstacle_class_from_string(const std::string& name) {
  if (name == "static") return ObstacleClass::Static;
  if (name == "dynamic") return ObstacleClass::Dynamic;
  if (name == "handled-object") return ObstacleClass::HandledObject;
  if (name == "robot-attached") return ObstacleClass::RobotAttached;
  throw ConfigError("unknown obstacle class '" + name + "'");
}

std::vector<Shape> Obstacle::world_parts() const {
  std::vector<Shape> out;
  out.reserve(parts.size());
  for (const auto& p : parts) out.push_back(translated(p, position));
  return out;
}

OctreeObstacleIndex::OctreeObstacleIndex(const Octree& octree) : grid_(octree.grid()) {
  levels_.resize(static_cast<std::size_t>(grid_.depth) + 1);
  octree.for_each_leaf([&](const VoxelKey& key, NodeState state) {
    if (state != NodeState::ObstaclePoint && state != NodeState::ObstacleOccluded) return;
    const std::uint64_t code = morton_encode(key);
    ++leaf_count_;
    for (int level = 0; level <= grid_.depth; ++level) {
      levels_[static_cast<std::size_t>(level)].insert(code >> (3 * level));
    }
  });
}

void OctreeObstacleIndex::descend(const RobotShape& shape, std::uint64_t code, int level, ClosestPoints& best) const {
  if (level == 0) {
    const auto cp = closest_points(shape, Shape{grid_.box_of(morton_decode(code))});
    if (cp.distance < best.distance) best = cp;
    return;
  }
  std::array<std::pair<double, std::uint64_t>, 8> children;
  std::size_t count = 0;
  const auto& below = levels_[static_cast<std::size_t>(level - 1)];
  for (std::uint64_t c = 0; c < 8; ++c) {
    const std::uint64_t child = code << 3 | c;
    if (!below.count(child)) continue;
    const Aabb box = grid_.node_box(morton_decode(child), level - 1);
    children[count++] = {closest_points(shape, Shape{box}).distance, child};
  }
  std::sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(count));
  for (std::size_t i = 0; i < count; ++i) {
    if (children[i].first >= best.distance) break;
    descend(shape, children[i].second, level - 1, best);
  }
}

ClosestPoints OctreeObstacleIndex::closest(const RobotShape& shape, double cutoff) const {
  ClosestPoints best;
  best.distance = cutoff;
  if (leaf_count_ > 0) descend(shape, 0, grid_.depth, best);
  if (best.distance >= cutoff) best.distance = kInfiniteDistance;
  return best;
}

WorldSnapshot::WorldSnapshot(std::vector<Obstacle> obstacles, double timestamp)
    : obstacles_(std::move(obstacles)), timestamp_(timestamp) {
  for (std::size_t i = 0; i < obstacles_.size(); ++i) {
    for (std::size_t j = i + 1; j < obstacles_.size(); ++j) {
      if (obstacles_[i].id == obstacles_[j].id) throw std::invalid_argument("duplicate obstacle id");
    }
  }
}

const Obstacle& WorldSnapshot::obstacle(int id) const {
  for (const auto& o : obstacles_) {
    if (o.id == id) return o;
  }
  throw NotFoundError("no obstacle with id " + std::to_string(id));
}

bool WorldSnapshot::has_obstacle(int id) const {
  return std::any_of(obstacles_.begin(), obstacles_.end(), [&](const Obstacle& o) { return o.id == id; });
}

WorldSnapshot WorldSnapshot::with_obstacles(std::vector<Obstacle> obstacles) const {
  WorldSnapshot out(std::move(obstacles), timestamp_);
  out.octree_ = octree_;
  out.index_ = index_;
  return out;
}

WorldSnapshot WorldSnapshot::with_obstacle(Obstacle obstacle) const {
  if (has_obstacle(obstacle.id)) throw std::invalid_argument("duplicate obstacle id");
  WorldSnapshot out = *this;
  out.obstacles_.push_back(std::move(obstacle));
  return out;
}

WorldSnapshot WorldSnapshot::without_obstacle(int id) const {
  obstacle(id);
  WorldSnapshot out = *this;
  std::erase_if(out.obstacles_, [&](const Obstacle& o) { return o.id == id; });
  return out;
}

WorldSnapshot WorldSnapshot::with_obstacle_position(int id, const Vec3& position) const {
  obstacle(id);
  WorldSnapshot out = *this;
  for (auto& o : out.obstacles_) {
    if (o.id == id) o.position = position;
  }
  return out;
}

WorldSnapshot WorldSnapshot::with_octree(std::shared_ptr<const Octree> octree) const {
  WorldSnapshot out = *this;
  out.octree_ = std::move(octree);
  out.index_ = out.octree_ ? std::make_shared<const OctreeObstacleIndex>(*out.octree_) : nullptr;
  return out;
}

WorldSnapshot WorldSnapshot::with_timestamp(double timestamp) const {
  WorldSnapshot out = *this;
  out.timestamp_ = timestamp;
  return out;
}

std::vector<Shape> WorldSnapshot::collision_shapes() const {
  std::vector<Shape> out;
  for (const auto& o : obstacles_) {
    if (o.cls != ObstacleClass::Static && o.cls != ObstacleClass::Dynamic) continue;
    for (auto& p : o.world_parts()) out.push_back(std::move(p));
  }
  return out;
}

namespace {

WorldSnapshot modify(const WorldSnapshot& world, int id, const std::function<void(Obstacle&)>& fn) {
  world.obstacle(id);
  std::vector<Obstacle> obstacles = world.obstacles();
  for (auto& o : obstacles) {
    if (o.id == id) fn(o);
  }
  return world.with_obstacles(std::move(obstacles));
}

}  // namespace

WorldSnapshot mark_handled(const WorldSnapshot& world, int id) {
  return modify(world, id, [](Obstacle& o) {
    o.cls = ObstacleClass::HandledObject;
    o.attached_link = -1;
  });
}

WorldSnapshot attach_object(const WorldSnapshot& world, int id, int link, const Transform& link_pose) {
  const Obstacle& current = world.obstacle(id);
  if (current.cls == ObstacleClass::RobotAttached && current.attached_link == link) return world;
  return modify(world, id, [&](Obstacle& o) {
    o.cls = ObstacleClass::RobotAttached;
    o.attached_link = link;
    o.attach_offset = link_pose.inverse() * o.position;
  });
}

WorldSnapshot release_object(const WorldSnapshot& world, int id, const Vec3& position) {
  return modify(world, id, [&](Obstacle& o) {
    o.cls = ObstacleClass::Dynamic;
    o.attached_link = -1;
    o.attach_offset = Vec3::Zero();
    o.position = position;
  });
}

std::vector<std::pair<int, RobotShape>> robot_geometry(const RobotModel& model, const KinematicState& state,
                                                       const WorldSnapshot& world) {
  auto out = link_shapes_world(model, state);
  for (const auto& o : world.obstacles()) {
    if (o.cls != ObstacleClass::RobotAttached) continue;
    if (o.attached_link < 0 || static_cast<std::size_t>(o.attached_link) >= state.link_frames.size()) {
      throw NotFoundError("attachment link " + std::to_string(o.attached_link) + " does not exist");
    }
    const Vec3 position = state.link_frames[static_cast<std::size_t>(o.attached_link)] * o.attach_offset;
    for (const auto& part : o.parts) {
      const Shape placed = translated(part, position);
      RobotShape as_robot;
      if (const auto* s = std::get_if<Sphere>(&placed)) {
        as_robot = *s;
      } else if (const auto* c = std::get_if<Capsule>(&placed)) {
        as_robot = *c;
      } else {
        as_robot = bounding_sphere(placed);
      }
      out.emplace_back(o.attached_link, as_robot);
    }
  }
  return out;
}

RobotModel carrying_model(const RobotModel& model, const WorldSnapshot& world) {
  std::vector<std::pair<int, RobotShape>> extra;
  for (const auto& o : world.obstacles()) {
    if (o.cls != ObstacleClass::RobotAttached) continue;
    // Parts keep their world orientation while the link turns, so the sphere
    // is centred on the attachment point and covers every orientation.
    double radius = 0.0;
    for (const auto& part : o.parts) {
      const Sphere s = bounding_sphere(part);
      radius = std::max(radius, s.center.norm() + s.radius);
    }
    extra.emplace_back(o.attached_link, Sphere{o.attach_offset, radius});
  }
  return extra.empty() ? model : model.with_extra_shapes(extra);
}

const LinkDistance* DistanceResult::nearest() const {
  const LinkDistance* best = nullptr;
  for (const auto& l : links) {
    if (!best || l.distance < best->distance) best = &l;
  }
  return best;
}

const LinkDistance* DistanceResult::link(int index) const {
  for (const auto& l : links) {
    if (l.link == index) return &l;
  }
  return nullptr;
}

DistanceResult min_distance(const RobotModel& model, const KinematicState& state, const WorldSnapshot& world,
                            const DistanceQueryOptions& options) {
  DistanceResult result;
  const auto shapes = robot_geometry(model, state, world);
  const auto obstacles = world.collision_shapes();
  const OctreeObstacleIndex* index = options.include_octree ? world.octree_index() : nullptr;

  for (const auto& [link, shape] : shapes) {
    auto it = std::find_if(result.links.begin(), result.links.end(), [&](const LinkDistance& l) { return l.link == link; });
    if (it == result.links.end()) {
      result.links.push_back(LinkDistance{link});
      it = result.links.end() - 1;
    }
    LinkDistance& entry = *it;
    for (const auto& obstacle : obstacles) {
      const auto cp = closest_points(shape, obstacle);
      if (cp.distance < entry.distance) {
        entry.distance = cp.distance;
        entry.x = cp.on_first;
        entry.o = cp.on_second;
      }
    }
    if (index && !index->empty()) {
      const auto cp = index->closest(shape, std::min(options.cutoff, entry.distance));
      if (cp.distance < entry.distance) {
        entry.distance = cp.distance;
        entry.x = cp.on_first;
        entry.o = cp.on_second;
      }
    }
  }
  for (auto& entry : result.links) {
    entry.x_local = state.link_frames[static_cast<std::size_t>(entry.link)].inverse() * entry.x;
    result.d = std::min(result.d, entry.distance);
  }
  return result;
}

DistanceResult min_distance(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                            const DistanceQueryOptions& options) {
  return min_distance(model, forward_kinematics(model, q), world, options);
}

bool is_collision_free(const RobotModel& model, const Configuration& q, const WorldSnapshot& world,
                       double clearance) {
  DistanceQueryOptions options;
  options.cutoff = clearance + 1e-9;
  return min_distance(model, q, world, options).d > clearance;
}

double compute_speed_scale(double d_current, double d_predicted, const SpeedScaleConfig& cfg) {
  if (!(cfg.d_stop >= 0.0 && cfg.d_stop < cfg.d_slow)) {
    throw std::invalid_argument("speed scaling needs 0 <= d_stop < d_slow");
  }
  const double d = std::min(d_current, d_predicted);
  if (d <= cfg.d_stop) return 0.0;
  if (d >= cfg.d_slow) return 1.0;
  return (d - cfg.d_stop) / (cfg.d_slow - cfg.d_stop);
}

TimedTrajectory TimedTrajectory::stationary(const Configuration& q) {
  TimedTrajectory t;
  t.times = {0.0};
  t.configurations = {q};
  return t;
}

Configuration TimedTrajectory::at(double t) const {
  if (configurations.empty() || times.size() != configurations.size()) {
    throw std::invalid_argument("trajectory needs one time per configuration");
  }
  if (t <= times.front()) return configurations.front();
  if (t >= times.back()) return configurations.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times.begin());
  const double span = times[i] - times[i - 1];
  const double s = span > 0.0 ? (t - times[i - 1]) / span : 1.0;
  return (1.0 - s) * configurations[i - 1] + s * configurations[i];
}

Capsule forecast_volume(const std::vector<DiscSample>& forecast, double t, const PredictionConfig& cfg) {
  if (forecast.empty()) throw std::invalid_argument("empty forecast");
  Eigen::Vector2d c = forecast.back().center;
  double r = forecast.back().radius;
  if (t <= forecast.front().t) {
    c = forecast.front().center;
    r = forecast.front().radius;
  } else {
    for (std::size_t i = 1; i < forecast.size(); ++i) {
      if (t <= forecast[i].t) {
        const double span = forecast[i].t - forecast[i - 1].t;
        const double s = span > 0.0 ? (t - forecast[i - 1].t) / span : 1.0;
        c = (1.0 - s) * forecast[i - 1].center + s * forecast[i].center;
        r = (1.0 - s) * forecast[i - 1].radius + s * forecast[i].radius;
        break;
      }
    }
  }
  return Capsule{Vec3(c.x(), c.y(), cfg.floor_z), Vec3(c.x(), c.y(), cfg.ceiling_z), r};
}

double predicted_min_distance(const RobotModel& model, const TimedTrajectory& motion,
                              const std::vector<std::vector<DiscSample>>& forecasts, const PredictionConfig& cfg) {
  if (!(cfg.horizon > 0.0) || !(cfg.dt > 0.0)) throw std::invalid_argument("prediction horizon and step must be positive");
  if (forecasts.empty()) return kInfiniteDistance;

  auto distance_at = [&](double t) {
    const auto shapes = link_shapes_world(model, forward_kinematics(model, motion.at(t)));
    double best = kInfiniteDistance;
    for (const auto& f : forecasts) {
      if (f.empty()) continue;
      const Shape volume = forecast_volume(f, t, cfg);
      for (const auto& [link, shape] : shapes) best = std::min(best, closest_points(shape, volume).distance);
    }
    return best;
  };

  std::vector<double> times;
  for (int i = 0;; ++i) {
    const double t = std::min(cfg.horizon, i * cfg.dt);
    times.push_back(t);
    if (t >= cfg.horizon) break;
  }
  std::vector<double> values;
  values.reserve(times.size());
  for (double t : times) values.push_back(distance_at(t));
  double best = *std::min_element(values.begin(), values.end());
  if (!cfg.refine) return best;

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const bool left_ok = i == 0 || values[i] <= values[i - 1];
    const bool right_ok = i + 1 == times.size() || values[i] <= values[i + 1];
    if (!left_ok || !right_ok) continue;
    double a = times[i == 0 ? 0 : i - 1];
    double b = times[i + 1 == times.size() ? i : i + 1];
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = distance_at(c);
    double fd = distance_at(d);
    for (int it = 0; it < 40 && b - a > 1e-6; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - ratio * (b - a);
        fc = distance_at(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + ratio * (b - a);
        fd = distance_at(d);
      }
    }
    best = std::min({best, fc, fd});
  }
  return best;
}

}  // namespace safemm
