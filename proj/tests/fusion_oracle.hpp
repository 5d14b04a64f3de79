#pragma once

// Brute-force voxel classifier used to check the octree pipeline. Every voxel
// is tested against every ray with an independent slab intersection.

#include "safemm/octree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace safemm::test {

struct OracleSensor {
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3> world_rays;  // unit directions
  double max_range = 1.0;
  std::vector<CloudPoint> points;
};

struct OracleView {
  std::vector<char> points, obstacle, robot, fov, free;
};

// Length of the overlap of segment a + t (b - a), t in [0,1], with the box.
inline double segment_overlap(const Vec3& a, const Vec3& b, const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0;
  double t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = b[k] - a[k];
    if (d == 0.0) {
      if (a[k] < lo[k] || a[k] > hi[k]) return 0.0;
      continue;
    }
    double ta = (lo[k] - a[k]) / d;
    double tb = (hi[k] - a[k]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0 ? t1 - t0 : 0.0;
}

class FusionOracle {
 public:
  explicit FusionOracle(const GridSpec& grid) : grid_(grid), n_(grid.cells()) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * n_ + static_cast<std::size_t>(y)) * n_ + static_cast<std::size_t>(x);
  }
  std::size_t volume() const { return static_cast<std::size_t>(n_) * n_ * n_; }

  OracleView classify(const OracleSensor& s) const {
    OracleView v;
    for (auto* set : {&v.points, &v.obstacle, &v.robot, &v.fov, &v.free}) set->assign(volume(), 0);
    for (const Vec3& dir : s.world_rays) mark(s.origin, s.origin + s.max_range * dir, v.fov);
    for (const auto& p : s.points) {
      if (p.cls == PointClass::MaxRange) continue;
      auto& target = p.cls == PointClass::Obstacle ? v.obstacle : v.robot;
      if (p.cls == PointClass::Obstacle) mark_point(p.position, v.points);
      const Vec3 u = (p.position - s.origin).normalized();
      const double reach = std::max(s.max_range, (p.position - s.origin).norm());
      mark(p.position, s.origin + reach * u, target);
      if (p.cls == PointClass::Robot) mark_point(p.position, target);
    }
    for (std::size_t i = 0; i < volume(); ++i) {
      v.obstacle[i] |= v.points[i];
      v.fov[i] |= v.obstacle[i] | v.robot[i];
      v.free[i] = v.fov[i] && !v.obstacle[i] && !v.robot[i];
    }
    return v;
  }

  // Fused state per voxel, following the same state rules as the library.
  std::vector<NodeState> fuse(const std::vector<OracleView>& views) const {
    std::vector<NodeState> out(volume(), NodeState::Unknown);
    for (std::size_t c = 0; c < volume(); ++c) {
      bool point = false, obstacle = false, robot = false, free = false;
      for (std::size_t i = 0; i < views.size(); ++i) {
        bool seen_free_elsewhere = false;
        for (std::size_t j = 0; j < views.size(); ++j) {
          if (j != i && views[j].free[c]) seen_free_elsewhere = true;
        }
        point = point || views[i].points[c];
        obstacle = obstacle || views[i].points[c] || (views[i].obstacle[c] && !seen_free_elsewhere);
        robot = robot || views[i].robot[c];
        free = free || views[i].free[c];
      }
      if (point) {
        out[c] = NodeState::ObstaclePoint;
      } else if (obstacle) {
        out[c] = NodeState::ObstacleOccluded;
      } else if (robot) {
        out[c] = NodeState::Robot;
      } else if (free) {
        out[c] = NodeState::Free;
      }
    }
    return out;
  }

 private:
  void mark(const Vec3& a, const Vec3& b, std::vector<char>& set) const {
    const double v = grid_.voxel();
    auto cell_range = [&](int k) {
      const double lo = (std::min(a[k], b[k]) - grid_.origin[k]) / v;
      const double hi = (std::max(a[k], b[k]) - grid_.origin[k]) / v;
      return std::pair<int, int>{std::max(0, static_cast<int>(std::floor(lo)) - 1),
                                 std::min(n_ - 1, static_cast<int>(std::floor(hi)) + 1)};
    };
    const auto [x0, x1] = cell_range(0);
    const auto [y0, y1] = cell_range(1);
    const auto [z0, z1] = cell_range(2);
    for (int z = z0; z <= z1; ++z) {
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Vec3 lo = grid_.origin + v * Vec3(x, y, z);
          if (segment_overlap(a, b, lo, lo + Vec3::Constant(v)) > 0.0) set[index(x, y, z)] = 1;
        }
      }
    }
  }

  void mark_point(const Vec3& p, std::vector<char>& set) const {
    const Vec3 rel = (p - grid_.origin) / grid_.voxel();
    int idx[3];
    for (int k = 0; k < 3; ++k) {
      if (rel[k] < 0.0 || rel[k] > n_) return;
      idx[k] = std::min(static_cast<int>(rel[k]), n_ - 1);
    }
    set[index(idx[0], idx[1], idx[2])] = 1;
  }

  GridSpec grid_;
  int n_;
};

}  // namespace safemm::test
