#include "safemm/errors.hpp"
#include "safemm/grasp_perception.hpp"
#include "safemm/random.hpp"

#include <doctest.h>

#include <numbers>
#include <set>
#include <sstream>

using namespace safemm;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Table top z = h sampled on a grid over [x0, x1] x [y0, y1].
std::vector<Vec3> table_points(double h, double x0, double x1, double y0, double y1, double step) {
  std::vector<Vec3> out;
  for (double x = x0; x <= x1 + 1e-12; x += step) {
    for (double y = y0; y <= y1 + 1e-12; y += step) out.emplace_back(x, y, h);
  }
  return out;
}

// Top and side faces of a box standing on z = base, yawed about z.
std::vector<Vec3> box_points(const Vec3& center_xy, double yaw, const Vec3& size, double base, double step) {
  std::vector<Vec3> out;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  const Vec3 half = 0.5 * size;
  auto add = [&](const Vec3& local) { out.push_back(Vec3(center_xy.x(), center_xy.y(), base + half.z()) + rot * local); };
  const int nx = static_cast<int>(std::round(size.x() / step));
  const int ny = static_cast<int>(std::round(size.y() / step));
  const int nz = static_cast<int>(std::round(size.z() / step));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) add(Vec3(-half.x() + i * size.x() / nx, -half.y() + j * size.y() / ny, half.z()));
  }
  for (int k = 0; k <= nz; ++k) {
    const double z = -half.z() + k * size.z() / nz;
    for (int i = 0; i <= nx; ++i) {
      add(Vec3(-half.x() + i * size.x() / nx, -half.y(), z));
      add(Vec3(-half.x() + i * size.x() / nx, half.y(), z));
    }
    for (int j = 0; j <= ny; ++j) {
      add(Vec3(-half.x(), -half.y() + j * size.y() / ny, z));
      add(Vec3(half.x(), -half.y() + j * size.y() / ny, z));
    }
  }
  return out;
}

double yaw_error_quarter(double a, double b) {
  const double q = std::numbers::pi / 2.0;
  double d = std::fmod(std::abs(a - b), q);
  return std::min(d, q - d);
}

}  // namespace

TEST_CASE("plane fit") {
  SUBCASE("exact plane") {
    // Tilted plane through (0, 0, 0.7).
    const Vec3 n = Vec3(0.1, -0.2, 1.0).normalized();
    const Vec3 u = n.cross(Vec3::UnitX()).normalized();
    const Vec3 w = n.cross(u);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 20; ++j) pts.push_back(Vec3(0, 0, 0.7) + 0.05 * i * u + 0.05 * j * w);
    }
    const PlaneModel p = fit_plane(pts);
    CHECK((p.normal - n).norm() < 1e-6);
    CHECK(p.normal.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.inliers.size() == pts.size());
    CHECK(p.rms < 1e-9);
  }
  SUBCASE("noise and outliers") {
    Rng rng(9);
    for (std::uint64_t trial = 1; trial <= 10; ++trial) {
      std::vector<Vec3> pts;
      std::set<std::size_t> truth;
      for (int i = 0; i < 700; ++i) {
        truth.insert(pts.size());
        pts.emplace_back(rng.uniform(0, 1), rng.uniform(-0.5, 0.5), 0.75 + rng.normal(0.0, 0.002));
      }
      for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(0, 1), rng.uniform(-0.5, 0.5), rng.uniform(0.0, 1.5));
      PlaneFitConfig cfg;
      cfg.seed = trial;
      const PlaneModel p = fit_plane(pts, cfg);
      CHECK(std::acos(std::min(1.0, p.normal.dot(Vec3::UnitZ()))) < 2.0 * kDeg);
      std::size_t found = 0;
      for (std::size_t i : p.inliers) {
        CHECK(std::abs(p.height(pts[i])) <= cfg.threshold);
        found += truth.count(i);
      }
      CHECK(found >= 0.95 * truth.size());
      // Same seed, same model.
      CHECK(fit_plane(pts, cfg).inliers == p.inliers);
    }
  }
  CHECK_THROWS_AS(fit_plane({Vec3::Zero(), Vec3::UnitX()}), InsufficientDataError);
}

TEST_CASE("segmentation") {
  PlaneModel table;
  table.normal = Vec3::UnitZ();
  table.offset = 0.7;
  std::vector<Vec3> pts = table_points(0.7, 0, 1, -0.5, 0.5, 0.02);
  CHECK(segment_objects(pts, table).empty());

  const auto a = box_points(Vec3(0.25, 0, 0), 0.0, Vec3(0.06, 0.1, 0.05), 0.7, 0.005);
  const auto b = box_points(Vec3(0.75, 0, 0), 0.0, Vec3(0.06, 0.1, 0.05), 0.7, 0.005);
  std::vector<Vec3> scene = pts;
  scene.insert(scene.end(), a.begin(), a.end());
  scene.insert(scene.end(), b.begin(), b.end());
  SegmentationConfig cfg;
  cfg.cluster_radius = 0.1;
  const auto clusters = segment_objects(scene, table, cfg);
  REQUIRE(clusters.size() == 2);
  for (const auto& c : clusters) {
    for (const auto& p : c) CHECK(table.height(p) >= cfg.min_height);
  }

  // Boxes side by side share a face and merge.
  const auto touching = box_points(Vec3(0.31, 0, 0), 0.0, Vec3(0.06, 0.1, 0.05), 0.7, 0.005);
  std::vector<Vec3> merged = a;
  merged.insert(merged.end(), touching.begin(), touching.end());
  CHECK(segment_objects(merged, table).size() == 1);
}

TEST_CASE("bounding box") {
  PlaneModel table;
  table.normal = Vec3::UnitZ();
  table.offset = 0.7;
  const double step = 0.005;
  const Vec3 size(0.06, 0.10, 0.05);
  SegmentationConfig seg;

  for (double yaw_deg : {0.0, 30.0, 75.0, 90.0, 130.0}) {
    CAPTURE(yaw_deg);
    const auto pts = box_points(Vec3(0.4, 0.1, 0), yaw_deg * kDeg, size, 0.7, step);
    const auto clusters = segment_objects(pts, table, seg);
    REQUIRE(clusters.size() == 1);
    const ObjectBox box = fit_bounding_box(clusters[0], table);
    CHECK(yaw_error_quarter(box.yaw, yaw_deg * kDeg) < 2.0 * kDeg);
    CHECK(box.yaw >= 0.0);
    CHECK(box.yaw < std::numbers::pi / 2.0);
    // Extents may come out in either order depending on the yaw fold.
    const double lo = std::min(box.extents.x(), box.extents.y());
    const double hi = std::max(box.extents.x(), box.extents.y());
    CHECK(std::abs(lo - 0.06) <= step);
    CHECK(std::abs(hi - 0.10) <= step);
    CHECK(std::abs(box.extents.z() - 0.05) <= step);
    CHECK(std::abs(box.center.x() - 0.4) <= step);
    CHECK(std::abs(box.center.y() - 0.1) <= step);
    CHECK(box.cluster_size == clusters[0].size());
    // Every point lies in the box inflated by a small tolerance.
    for (const auto& p : clusters[0]) {
      const Vec3 d = p - box.center;
      CHECK(std::abs(d.dot(box.axis(0))) <= 0.5 * box.extents.x() + 1e-9);
      CHECK(std::abs(d.dot(box.axis(1))) <= 0.5 * box.extents.y() + 1e-9);
      CHECK(std::abs(d.dot(box.normal)) <= 0.5 * box.extents.z() + 1e-9);
    }
  }

  // The same box from a seeded fit of the table plane.
  std::vector<Vec3> scene = table_points(0.7, 0, 1, -0.5, 0.5, 0.02);
  const auto obj = box_points(Vec3(0.5, 0.0, 0), 0.3, size, 0.7, step);
  scene.insert(scene.end(), obj.begin(), obj.end());
  const PlaneModel fitted = fit_plane(scene);
  const auto clusters = segment_objects(scene, fitted);
  REQUIRE(clusters.size() == 1);
  CHECK(yaw_error_quarter(fit_bounding_box(clusters[0], fitted).yaw, 0.3) < 2.0 * kDeg);

  CHECK_THROWS_AS(fit_bounding_box({Vec3(0, 0, 1), Vec3(0, 0.1, 1)}, table), InsufficientDataError);
}

TEST_CASE("grasp selection") {
  ObjectBox box;
  box.center = Vec3(0.5, 0.0, 0.725);
  box.extents = Vec3(0.10, 0.06, 0.05);
  box.yaw = 0.2;

  const GraspSpec g = select_grasp(box, 0.08, 0.01);
  CHECK(g.aperture == doctest::Approx(0.06));
  CHECK(g.aperture + 0.01 <= 0.08);
  CHECK((g.contact_b - g.contact_a).norm() == doctest::Approx(0.06));
  CHECK(((g.contact_a + g.contact_b) / 2 - box.center).norm() < 1e-12);
  CHECK(g.closing_yaw == doctest::Approx(0.2 + std::numbers::pi / 2));
  CHECK(g.approach == -Vec3::UnitZ());

  box.extents = Vec3(0.06, 0.10, 0.05);
  CHECK(select_grasp(box, 0.08, 0.01).closing_yaw == doctest::Approx(0.2));

  box.extents = Vec3(0.09, 0.12, 0.05);
  CHECK_THROWS_AS(select_grasp(box, 0.08, 0.01), UngraspableError);

  // Square footprint: the lower-yaw axis wins.
  box.extents = Vec3(0.05, 0.05, 0.05);
  CHECK(select_grasp(box, 0.08, 0.01).closing_yaw == doctest::Approx(0.2));

  // A side wider than the opening is skipped.
  box.extents = Vec3(0.09, 0.05, 0.05);
  CHECK(select_grasp(box, 0.08, 0.01).aperture == doctest::Approx(0.05));
}

TEST_CASE("perception from a rendered cloud") {
  // Round trip through the text cloud format before perception.
  PointCloud cloud;
  for (const auto& p : table_points(0.7, 0, 1, -0.5, 0.5, 0.02)) cloud.points.push_back({p, PointClass::Obstacle});
  for (const auto& p : box_points(Vec3(0.5, 0.2, 0), 0.5, Vec3(0.06, 0.1, 0.05), 0.7, 0.005)) {
    cloud.points.push_back({p, PointClass::Obstacle});
  }
  cloud.points.push_back({Vec3(0, 0, 5), PointClass::MaxRange});
  std::stringstream ss;
  write_point_cloud(ss, cloud);
  const auto pts = obstacle_points(read_point_cloud(ss));
  CHECK(pts.size() == cloud.points.size() - 1);
  const PlaneModel plane = fit_plane(pts);
  const auto clusters = segment_objects(pts, plane);
  REQUIRE(clusters.size() == 1);
  const GraspSpec g = select_grasp(fit_bounding_box(clusters[0], plane), 0.08, 0.01);
  CHECK(g.aperture == doctest::Approx(0.06).epsilon(0.1));
}
