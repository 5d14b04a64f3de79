#pragma once

#include "safemm/collision_world.hpp"
#include "safemm/sensing.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <set>
#include <vector>

namespace safemm {

using Vec2 = Eigen::Vector2d;

struct TrackingConfig {
  double cell = 0.1;
  Vec2 grid_min = Vec2(-10.0, -10.0);
  Vec2 grid_max = Vec2(10.0, 10.0);
  double floor_z = 0.05;
  double ceiling_z = 2.0;
  /// Weights and normalization scales of the association distance.
  double w_position = 1.0;
  double w_density = 0.1;
  double density_scale = 10.0;
  double w_height = 0.3;
  double height_scale = 0.5;
  double gate = 1.0;
  int max_misses = 5;
  /// Continuous white-noise acceleration spectral density (m^2/s^3).
  double process_noise = 0.003;
  double measurement_sigma = 0.05;
  double initial_velocity_sigma = 1.0;
  /// Prediction disc radius = base_radius + k * sqrt(max eigenvalue).
  double base_radius = 0.25;
  double k_sigma = 2.0;
  /// Moving when |v| > v_min + k_v * sqrt(max eigenvalue of velocity covariance).
  double v_min = 0.1;
  double k_v = 2.0;
  int confirm_hits = 3;
};

struct GridCell {
  std::map<int, double> density;  // points per sensor
  std::optional<double> height;   // highest point above floor, 3D sensors only
};

using CellKey = std::pair<int, int>;

/// Sparse ground-plane grid with per-cell, per-sensor features.
class Grid25D {
 public:
  explicit Grid25D(const TrackingConfig& cfg = {});

  double cell_size() const { return cell_; }
  void insert_points(const PointCloud& cloud, double floor_z, double ceiling_z);
  void insert_points(const PointCloud& cloud) { insert_points(cloud, floor_z_, ceiling_z_); }
  const std::map<CellKey, GridCell>& cells() const { return cells_; }
  const GridCell* cell(const CellKey& key) const;
  std::optional<CellKey> key_of(const Vec2& p) const;
  Vec2 center_of(const CellKey& key) const;

 private:
  double cell_;
  Vec2 min_, max_;
  double floor_z_, ceiling_z_;
  std::map<CellKey, GridCell> cells_;
};

struct Hypothesis {
  Vec2 centroid = Vec2::Zero();
  std::vector<CellKey> cells;
  std::map<int, double> density;  // mean over the cells each sensor contributed to
  std::optional<double> height;
  std::set<int> sensors;
};

/// 8-connected components of occupied cells.
std::vector<Hypothesis> cluster(const Grid25D& grid);

struct Track {
  int id = 0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();  // x, y, vx, vy
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
  double time = 0.0;
  std::map<int, double> density;
  std::optional<double> height;
  int age = 1;
  int hits = 1;
  int misses = 0;

  Vec2 position() const { return x.head<2>(); }
  Vec2 velocity() const { return x.tail<2>(); }
};

Track spawn_track(int id, const Hypothesis& h, double t, const TrackingConfig& cfg = {});

Track kalman_predict(const Track& track, double dt, const TrackingConfig& cfg = {});
Track kalman_update(const Track& track, const Hypothesis& h, const TrackingConfig& cfg = {});

double association_distance(const Hypothesis& h, const Track& o, double t, const TrackingConfig& cfg = {});

/// Minimum-cost assignment of rows to columns; result[row] is the column or -1.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

struct Association {
  std::vector<std::pair<int, int>> matches;  // (hypothesis, track)
  std::vector<int> unmatched_hypotheses;
  std::vector<int> unmatched_tracks;
};

Association associate(const std::vector<Hypothesis>& hypotheses, const std::vector<Track>& tracks, double t,
                      const TrackingConfig& cfg = {});

std::vector<DiscSample> predict_occupancy(const Track& track, double horizon, int steps, const TrackingConfig& cfg = {});

bool is_moving(const Track& track, const TrackingConfig& cfg = {});

/// Keeps the track list across frames: associate, update, spawn, drop.
class Tracker {
 public:
  explicit Tracker(TrackingConfig cfg = {}) : cfg_(cfg) {}

  const TrackingConfig& config() const { return cfg_; }
  const std::vector<Track>& tracks() const { return tracks_; }
  void update(const std::vector<Hypothesis>& hypotheses, double t);
  /// Tracks seen often enough to be trusted for prediction.
  std::vector<Track> confirmed() const;

 private:
  TrackingConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
};

}  // namespace safemm
