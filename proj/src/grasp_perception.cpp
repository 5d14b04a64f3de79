#include "safemm/grasp_perception.hpp"

#include "safemm/errors.hpp"
#include "safemm/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace safemm {

namespace {

using Vec2 = Eigen::Vector2d;

struct PlaneCandidate {
  Vec3 normal;
  double offset;
};

PlaneCandidate oriented(Vec3 normal, const Vec3& through) {
  normal.normalize();
  if (normal.z() < 0.0 || (normal.z() == 0.0 && (normal.y() < 0.0 || (normal.y() == 0.0 && normal.x() < 0.0)))) {
    normal = -normal;
  }
  return {normal, normal.dot(through)};
}

std::vector<std::size_t> inliers_of(const std::vector<Vec3>& points, const PlaneCandidate& plane, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::abs(plane.normal.dot(points[i]) - plane.offset) <= threshold) out.push_back(i);
  }
  return out;
}

std::optional<PlaneCandidate> least_squares(const std::vector<Vec3>& points, const std::vector<std::size_t>& idx) {
  if (idx.size() < 3) return std::nullopt;
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i : idx) centroid += points[i];
  centroid /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Vec3 d = points[i] - centroid;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.info() != Eigen::Success) return std::nullopt;
  return oriented(eig.eigenvectors().col(0), centroid);
}

// In-plane orthonormal basis: u follows world x where possible.
std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  Vec3 u = Vec3::UnitX() - n * n.x();
  if (u.norm() < 1e-6) u = Vec3::UnitY() - n * n.y();
  u.normalize();
  return {u, n.cross(u)};
}

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain, counter-clockwise, collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double wrap_quarter(double angle) {
  const double quarter = std::numbers::pi / 2.0;
  double a = std::fmod(angle, quarter);
  if (a < 0.0) a += quarter;
  if (a >= quarter) a -= quarter;
  return a;
}

}  // namespace

PlaneModel fit_plane(const std::vector<Vec3>& points, const PlaneFitConfig& cfg) {
  if (points.size() < 3) throw InsufficientDataError("plane fit needs at least three points");
  if (!(cfg.threshold > 0.0) || cfg.iterations < 1) throw std::invalid_argument("invalid plane fit settings");
  Rng rng(cfg.seed);
  std::optional<PlaneCandidate> best;
  std::size_t best_count = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::size_t a = rng.index(points.size());
    const std::size_t b = rng.index(points.size());
    const std::size_t c = rng.index(points.size());
    if (a == b || b == c || a == c) continue;
    const Vec3 n = (points[b] - points[a]).cross(points[c] - points[a]);
    if (n.norm() < 1e-12) continue;
    const PlaneCandidate cand = oriented(n, points[a]);
    const std::size_t count = inliers_of(points, cand, cfg.threshold).size();
    if (count > best_count) {
      best_count = count;
      best = cand;
    }
  }
  if (!best) throw InsufficientDataError("no three non-collinear points found");

  PlaneCandidate plane = *best;
  std::vector<std::size_t> inliers = inliers_of(points, plane, cfg.threshold);
  // Refine while it does not lose inliers.
  for (int round = 0; round < 3; ++round) {
    const auto refined = least_squares(points, inliers);
    if (!refined) break;
    auto refined_inliers = inliers_of(points, *refined, cfg.threshold);
    if (refined_inliers.size() < inliers.size()) break;
    plane = *refined;
    inliers = std::move(refined_inliers);
  }

  PlaneModel model;
  model.normal = plane.normal;
  model.offset = plane.offset;
  double sq = 0.0;
  for (std::size_t i : inliers) sq += std::pow(model.height(points[i]), 2);
  model.rms = inliers.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(inliers.size()));
  model.inliers = std::move(inliers);
  return model;
}

std::vector<Vec3> obstacle_points(const PointCloud& cloud) {
  std::vector<Vec3> out;
  for (const auto& p : cloud.points) {
    if (p.cls == PointClass::Obstacle) out.push_back(p.position);
  }
  return out;
}

std::vector<std::vector<Vec3>> segment_objects(const std::vector<Vec3>& points, const PlaneModel& plane,
                                               const SegmentationConfig& cfg) {
  if (!(cfg.cluster_radius > 0.0)) throw std::invalid_argument("cluster radius must be positive");
  std::vector<Vec3> above;
  for (const auto& p : points) {
    if (plane.height(p) >= cfg.min_height) above.push_back(p);
  }

  // Hash grid with cells of the cluster radius: neighbours are in the 27
  // surrounding cells.
  const double r = cfg.cluster_radius;
  auto cell_of = [r](const Vec3& p) {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / r)), static_cast<int>(std::floor(p.y() / r)),
                           static_cast<int>(std::floor(p.z() / r)));
  };
  auto key = [](const Eigen::Vector3i& c) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x()) & 0x1FFFFF) << 42) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y()) & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z()) & 0x1FFFFF);
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < above.size(); ++i) grid[key(cell_of(above[i]))].push_back(i);

  std::vector<int> label(above.size(), -1);
  std::vector<std::vector<Vec3>> clusters;
  for (std::size_t seed = 0; seed < above.size(); ++seed) {
    if (label[seed] >= 0) continue;
    const int id = static_cast<int>(clusters.size());
    std::vector<std::size_t> members{seed};
    label[seed] = id;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Vec3& p = above[members[k]];
      const Eigen::Vector3i c = cell_of(p);
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dz = -1; dz <= 1; ++dz) {
            const auto it = grid.find(key(c + Eigen::Vector3i(dx, dy, dz)));
            if (it == grid.end()) continue;
            for (std::size_t j : it->second) {
              if (label[j] < 0 && (above[j] - p).norm() < r) {
                label[j] = id;
                members.push_back(j);
              }
            }
          }
        }
      }
    }
    std::sort(members.begin(), members.end());
    std::vector<Vec3> cluster;
    cluster.reserve(members.size());
    for (std::size_t i : members) cluster.push_back(above[i]);
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

Vec3 ObjectBox::axis(int k) const {
  const auto [u, v] = plane_basis(normal);
  const double a = yaw + (k == 0 ? 0.0 : std::numbers::pi / 2.0);
  return std::cos(a) * u + std::sin(a) * v;
}

ObjectBox fit_bounding_box(const std::vector<Vec3>& cluster, const PlaneModel& plane) {
  if (cluster.size() < 3) throw InsufficientDataError("bounding box needs at least three points");
  const auto [u, v] = plane_basis(plane.normal);
  std::vector<Vec2> flat;
  flat.reserve(cluster.size());
  double top = 0.0;
  for (const auto& p : cluster) {
    flat.emplace_back(u.dot(p), v.dot(p));
    top = std::max(top, plane.height(p));
  }
  const std::vector<Vec2> hull = convex_hull(flat);

  // Candidate orientations: every hull edge (or the single segment of a
  // degenerate hull).
  std::vector<double> angles;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    if (e.norm() > 0.0) angles.push_back(wrap_quarter(std::atan2(e.y(), e.x())));
  }
  if (angles.empty()) angles.push_back(0.0);

  double best_area = std::numeric_limits<double>::infinity();
  double best_yaw = 0.0;
  Vec2 lo_best = Vec2::Zero(), hi_best = Vec2::Zero();
  for (double a : angles) {
    const Vec2 ax(std::cos(a), std::sin(a));
    const Vec2 ay(-std::sin(a), std::cos(a));
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& p : hull) {
      const Vec2 c(ax.dot(p), ay.dot(p));
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
    const double area = (hi - lo).prod();
    const double tol = 1e-12 * std::max(1.0, area);
    if (!std::isfinite(best_area) || area < best_area - tol || (std::abs(area - best_area) <= tol && a < best_yaw)) {
      best_area = area;
      best_yaw = a;
      lo_best = lo;
      hi_best = hi;
    }
  }

  ObjectBox box;
  box.normal = plane.normal;
  box.yaw = best_yaw;
  box.cluster_size = cluster.size();
  box.extents = Vec3(hi_best.x() - lo_best.x(), hi_best.y() - lo_best.y(), top);
  const Vec2 mid = 0.5 * (lo_best + hi_best);
  const Vec2 ax(std::cos(best_yaw), std::sin(best_yaw));
  const Vec2 ay(-std::sin(best_yaw), std::cos(best_yaw));
  const Vec2 center2 = mid.x() * ax + mid.y() * ay;
  box.center = center2.x() * u + center2.y() * v + plane.normal * (plane.offset + 0.5 * top);
  return box;
}

GraspSpec select_grasp(const ObjectBox& box, double max_aperture, double finger_clearance) {
  if (!(max_aperture > 0.0) || !(finger_clearance >= 0.0)) throw std::invalid_argument("invalid gripper geometry");
  int best = -1;
  for (int k = 0; k < 2; ++k) {
    if (box.extents[k] + finger_clearance > max_aperture) continue;
    // Axis 0 has the lower yaw, so it wins ties.
    if (best < 0 || box.extents[k] < box.extents[best]) best = k;
  }
  if (best < 0) throw UngraspableError("object is wider than the gripper opening on both sides");
  GraspSpec g;
  const Vec3 axis = box.axis(best);
  g.contact_a = box.center - 0.5 * box.extents[best] * axis;
  g.contact_b = box.center + 0.5 * box.extents[best] * axis;
  g.approach = -box.normal;
  g.aperture = box.extents[best];
  g.closing_yaw = box.yaw + (best == 0 ? 0.0 : std::numbers::pi / 2.0);
  return g;
}

}  // namespace safemm
