#include "safemm/tracking.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safemm {

namespace {

double max_eigenvalue(const Eigen::Matrix2d& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

Eigen::Matrix4d transition(double dt) {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

Eigen::Matrix4d process_covariance(double dt, double q) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  const double a = q * dt * dt * dt / 3.0;
  const double b = q * dt * dt / 2.0;
  const double c = q * dt;
  m(0, 0) = m(1, 1) = a;
  m(0, 2) = m(2, 0) = m(1, 3) = m(3, 1) = b;
  m(2, 2) = m(3, 3) = c;
  return m;
}

}  // namespace

Grid25D::Grid25D(const TrackingConfig& cfg)
    : cell_(cfg.cell), min_(cfg.grid_min), max_(cfg.grid_max), floor_z_(cfg.floor_z), ceiling_z_(cfg.ceiling_z) {
  if (!(cell_ > 0.0)) throw std::invalid_argument("grid cell size must be positive");
}

std::optional<CellKey> Grid25D::key_of(const Vec2& p) const {
  if (p.x() < min_.x() || p.y() < min_.y() || p.x() >= max_.x() || p.y() >= max_.y()) return std::nullopt;
  return CellKey{static_cast<int>(std::floor((p.x() - min_.x()) / cell_)),
                 static_cast<int>(std::floor((p.y() - min_.y()) / cell_))};
}

Vec2 Grid25D::center_of(const CellKey& key) const {
  return min_ + cell_ * Vec2(key.first + 0.5, key.second + 0.5);
}

const GridCell* Grid25D::cell(const CellKey& key) const {
  const auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

void Grid25D::insert_points(const PointCloud& cloud, double floor_z, double ceiling_z) {
  if (!(floor_z < ceiling_z)) throw std::invalid_argument("floor must lie below ceiling");
  for (const auto& p : cloud.points) {
    if (p.cls != PointClass::Obstacle) continue;
    const double z = p.position.z();
    if (z < floor_z || z > ceiling_z) continue;
    const auto key = key_of(p.position.head<2>());
    if (!key) continue;
    GridCell& c = cells_[*key];
    c.density[cloud.sensor_id] += 1.0;
    if (cloud.sensor_kind == SensorKind::Depth3D) c.height = std::max(c.height.value_or(0.0), z - floor_z);
  }
}

std::vector<Hypothesis> cluster(const Grid25D& grid) {
  std::vector<Hypothesis> out;
  std::set<CellKey> visited;
  for (const auto& [start, unused] : grid.cells()) {
    if (visited.count(start)) continue;
    Hypothesis h;
    std::vector<CellKey> stack{start};
    visited.insert(start);
    while (!stack.empty()) {
      const CellKey k = stack.back();
      stack.pop_back();
      h.cells.push_back(k);
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          const CellKey n{k.first + dx, k.second + dy};
          if (grid.cell(n) && visited.insert(n).second) stack.push_back(n);
        }
      }
    }
    std::sort(h.cells.begin(), h.cells.end());
    std::map<int, int> contributing;
    for (const auto& k : h.cells) {
      const GridCell& c = *grid.cell(k);
      h.centroid += grid.center_of(k);
      for (const auto& [sensor, d] : c.density) {
        h.density[sensor] += d;
        ++contributing[sensor];
        h.sensors.insert(sensor);
      }
      if (c.height) h.height = std::max(h.height.value_or(0.0), *c.height);
    }
    h.centroid /= static_cast<double>(h.cells.size());
    for (auto& [sensor, d] : h.density) d /= contributing[sensor];
    out.push_back(std::move(h));
  }
  return out;
}

Track spawn_track(int id, const Hypothesis& h, double t, const TrackingConfig& cfg) {
  Track track;
  track.id = id;
  track.time = t;
  track.x << h.centroid, 0.0, 0.0;
  const double sp = cfg.measurement_sigma * cfg.measurement_sigma;
  const double sv = cfg.initial_velocity_sigma * cfg.initial_velocity_sigma;
  track.P = Eigen::Vector4d(sp, sp, sv, sv).asDiagonal();
  track.density = h.density;
  track.height = h.height;
  return track;
}

Track kalman_predict(const Track& track, double dt, const TrackingConfig& cfg) {
  if (!(dt > 0.0)) throw std::invalid_argument("prediction step must be positive");
  const Eigen::Matrix4d f = transition(dt);
  Track out = track;
  out.x = f * track.x;
  out.P = f * track.P * f.transpose() + process_covariance(dt, cfg.process_noise);
  out.P = 0.5 * (out.P + out.P.transpose());
  out.time = track.time + dt;
  return out;
}

Track kalman_update(const Track& track, const Hypothesis& h, const TrackingConfig& cfg) {
  Eigen::Matrix<double, 2, 4> hm = Eigen::Matrix<double, 2, 4>::Zero();
  hm(0, 0) = hm(1, 1) = 1.0;
  const Eigen::Matrix2d r = Eigen::Matrix2d::Identity() * cfg.measurement_sigma * cfg.measurement_sigma;
  const Eigen::Matrix2d s = hm * track.P * hm.transpose() + r;
  const Eigen::Matrix<double, 4, 2> k = track.P * hm.transpose() * s.inverse();
  Track out = track;
  out.x = track.x + k * (h.centroid - hm * track.x);
  const Eigen::Matrix4d a = Eigen::Matrix4d::Identity() - k * hm;
  out.P = a * track.P * a.transpose() + k * r * k.transpose();
  out.P = 0.5 * (out.P + out.P.transpose());
  for (const auto& [sensor, d] : h.density) out.density[sensor] = d;
  if (h.height) out.height = h.height;
  return out;
}

double association_distance(const Hypothesis& h, const Track& o, double t, const TrackingConfig& cfg) {
  const double dt = t - o.time;
  const Vec2 predicted = o.position() + (dt > 0.0 ? dt : 0.0) * o.velocity();
  double d = cfg.w_position * (h.centroid - predicted).norm();
  for (const auto& [sensor, density] : h.density) {
    const auto it = o.density.find(sensor);
    if (it != o.density.end()) d += cfg.w_density * std::abs(density - it->second) / cfg.density_scale;
  }
  if (h.height && o.height) d += cfg.w_height * std::abs(*h.height - *o.height) / cfg.height_scale;
  return d;
}

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const auto rows = static_cast<std::size_t>(cost.rows());
  const auto cols = static_cast<std::size_t>(cost.cols());
  std::vector<int> out(rows, -1);
  if (rows == 0 || cols == 0) return out;
  if (rows > cols) {
    const std::vector<int> transposed = min_cost_assignment(cost.transpose());
    for (std::size_t c = 0; c < cols; ++c) {
      if (transposed[c] >= 0) out[static_cast<std::size_t>(transposed[c])] = static_cast<int>(c);
    }
    return out;
  }
  // Hungarian method with row/column potentials; index 0 is a sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> p(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= cols; ++j) {
    if (p[j] > 0) out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

Association associate(const std::vector<Hypothesis>& hypotheses, const std::vector<Track>& tracks, double t,
                      const TrackingConfig& cfg) {
  Association result;
  const auto nh = static_cast<Eigen::Index>(hypotheses.size());
  const auto nt = static_cast<Eigen::Index>(tracks.size());
  // Gated pairs get a cost larger than any feasible total so they are only
  // chosen when nothing else is possible, and are then discarded.
  const double blocked = 1e6 + 10.0 * cfg.gate * static_cast<double>(std::max(nh, nt) + 1);
  Eigen::MatrixXd cost(nh, nt);
  for (Eigen::Index i = 0; i < nh; ++i) {
    for (Eigen::Index j = 0; j < nt; ++j) {
      const double d = association_distance(hypotheses[static_cast<std::size_t>(i)], tracks[static_cast<std::size_t>(j)], t, cfg);
      cost(i, j) = d <= cfg.gate ? d : blocked;
    }
  }
  const std::vector<int> assignment = min_cost_assignment(cost);
  std::vector<char> track_used(static_cast<std::size_t>(nt), 0);
  for (Eigen::Index i = 0; i < nh; ++i) {
    const int j = assignment[static_cast<std::size_t>(i)];
    if (j >= 0 && cost(i, j) < blocked) {
      result.matches.emplace_back(static_cast<int>(i), j);
      track_used[static_cast<std::size_t>(j)] = 1;
    } else {
      result.unmatched_hypotheses.push_back(static_cast<int>(i));
    }
  }
  for (Eigen::Index j = 0; j < nt; ++j) {
    if (!track_used[static_cast<std::size_t>(j)]) result.unmatched_tracks.push_back(static_cast<int>(j));
  }
  return result;
}

std::vector<DiscSample> predict_occupancy(const Track& track, double horizon, int steps, const TrackingConfig& cfg) {
  if (!(horizon > 0.0) || steps < 1) throw std::invalid_argument("prediction needs a positive horizon and steps");
  std::vector<DiscSample> out;
  double radius = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double t = horizon * i / steps;
    Eigen::Matrix4d p = track.P;
    if (t > 0.0) {
      const Eigen::Matrix4d f = transition(t);
      p = f * track.P * f.transpose() + process_covariance(t, cfg.process_noise);
    }
    const double r = cfg.base_radius + cfg.k_sigma * std::sqrt(max_eigenvalue(p.topLeftCorner<2, 2>()));
    radius = std::max(radius, r);
    out.push_back({t, track.position() + t * track.velocity(), radius});
  }
  return out;
}

bool is_moving(const Track& track, const TrackingConfig& cfg) {
  const double sigma = std::sqrt(max_eigenvalue(track.P.bottomRightCorner<2, 2>()));
  return track.velocity().norm() > cfg.v_min + cfg.k_v * sigma;
}

void Tracker::update(const std::vector<Hypothesis>& hypotheses, double t) {
  for (auto& track : tracks_) {
    if (t > track.time) track = kalman_predict(track, t - track.time, cfg_);
  }
  const Association a = associate(hypotheses, tracks_, t, cfg_);
  for (const auto& [hi, ti] : a.matches) {
    Track& track = tracks_[static_cast<std::size_t>(ti)];
    track = kalman_update(track, hypotheses[static_cast<std::size_t>(hi)], cfg_);
    ++track.hits;
    track.misses = 0;
  }
  for (int ti : a.unmatched_tracks) ++tracks_[static_cast<std::size_t>(ti)].misses;
  for (auto& track : tracks_) ++track.age;
  std::erase_if(tracks_, [&](const Track& track) { return track.misses >= cfg_.max_misses; });
  for (int hi : a.unmatched_hypotheses) tracks_.push_back(spawn_track(next_id_++, hypotheses[static_cast<std::size_t>(hi)], t, cfg_));
}

std::vector<Track> Tracker::confirmed() const {
  std::vector<Track> out;
  for (const auto& track : tracks_) {
    if (track.hits >= cfg_.confirm_hits) out.push_back(track);
  }
  return out;
}

}  // namespace safemm
