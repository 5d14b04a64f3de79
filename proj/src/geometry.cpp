#include "safemm/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace safemm {

namespace {

constexpr double kEps = 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Offsets the core-to-core closest points by the two radii.
ClosestPoints inflate(const Vec3& core_a, double ra, const Vec3& core_b, double rb) {
  ClosestPoints out;
  const Vec3 delta = core_b - core_a;
  const double len = delta.norm();
  out.distance = std::max(0.0, len - ra - rb);
  if (len > kEps) {
    const Vec3 dir = delta / len;
    out.on_first = core_a + std::min(ra, len) * dir;
    out.on_second = core_b - std::min(rb, len) * dir;
  } else {
    out.on_first = core_a;
    out.on_second = core_b;
  }
  return out;
}

std::optional<double> smallest_nonnegative_root(double a, double b, double c) {
  // a t^2 + b t + c = 0
  if (std::abs(a) < kEps) return std::nullopt;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  const double t1 = (-b + sq) / (2.0 * a);
  if (t0 >= 0.0) return t0;
  if (t1 >= 0.0) return t1;
  return std::nullopt;
}

}  // namespace

bool Aabb::contains(const Vec3& p, double tol) const {
  return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

Aabb Aabb::inflated(double margin) const {
  return Aabb{(lo.array() - margin).matrix(), (hi.array() + margin).matrix()};
}

RobotShape transformed(const RobotShape& shape, const Transform& tf) {
  return std::visit(Overloaded{
                        [&](const Sphere& s) -> RobotShape { return Sphere{tf * s.center, s.radius}; },
                        [&](const Capsule& c) -> RobotShape {
                          return Capsule{tf * c.a, tf * c.b, c.radius};
                        },
                    },
                    shape);
}

Shape translated(const Shape& shape, const Vec3& offset) {
  return std::visit(Overloaded{
                        [&](const Sphere& s) -> Shape { return Sphere{s.center + offset, s.radius}; },
                        [&](const Capsule& c) -> Shape {
                          return Capsule{c.a + offset, c.b + offset, c.radius};
                        },
                        [&](const Aabb& b) -> Shape { return Aabb{b.lo + offset, b.hi + offset}; },
                    },
                    shape);
}

Sphere bounding_sphere(const RobotShape& shape) {
  return std::visit(Overloaded{
                        [](const Sphere& s) { return s; },
                        [](const Capsule& c) {
                          return Sphere{0.5 * (c.a + c.b), 0.5 * (c.b - c.a).norm() + c.radius};
                        },
                    },
                    shape);
}

Sphere bounding_sphere(const Shape& shape) {
  return std::visit(Overloaded{
                        [](const Sphere& s) { return s; },
                        [](const Capsule& c) {
                          return Sphere{0.5 * (c.a + c.b), 0.5 * (c.b - c.a).norm() + c.radius};
                        },
                        [](const Aabb& b) { return Sphere{b.center(), 0.5 * b.extents().norm()}; },
                    },
                    shape);
}

Aabb bounds_of(const RobotShape& shape) {
  return std::visit(Overloaded{
                        [](const Sphere& s) {
                          return Aabb{(s.center.array() - s.radius).matrix(), (s.center.array() + s.radius).matrix()};
                        },
                        [](const Capsule& c) {
                          return Aabb{(c.a.cwiseMin(c.b).array() - c.radius).matrix(),
                                      (c.a.cwiseMax(c.b).array() + c.radius).matrix()};
                        },
                    },
                    shape);
}

Aabb bounds_of(const Shape& shape) {
  return std::visit(Overloaded{
                        [](const Sphere& s) { return bounds_of(RobotShape{s}); },
                        [](const Capsule& c) { return bounds_of(RobotShape{c}); },
                        [](const Aabb& b) { return b; },
                    },
                    shape);
}

Vec3 shape_center(const Shape& shape) { return bounding_sphere(shape).center; }

double closest_parameter_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < kEps * kEps) return 0.0;
  return std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
}

std::pair<double, double> closest_parameters_segments(const Vec3& p0, const Vec3& p1,
                                                      const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (a <= kEps && e <= kEps) return {0.0, 0.0};
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
    return {0.0, t};
  }
  const double c = d1.dot(r);
  if (e <= kEps) {
    s = std::clamp(-c / a, 0.0, 1.0);
    return {s, 0.0};
  }
  const double b = d1.dot(d2);
  const double denom = a * e - b * b;
  s = denom > kEps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
  t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = std::clamp(-c / a, 0.0, 1.0);
  } else if (t > 1.0) {
    t = 1.0;
    s = std::clamp((b - c) / a, 0.0, 1.0);
  }
  return {s, t};
}

Vec3 closest_point_on_box(const Vec3& p, const Aabb& box) {
  return p.cwiseMax(box.lo).cwiseMin(box.hi);
}

ClosestPoints segment_box_closest(const Vec3& a, const Vec3& b, const Aabb& box) {
  const Vec3 d = b - a;
  std::array<double, 8> breaks{};
  std::size_t count = 0;
  breaks[count++] = 0.0;
  breaks[count++] = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < kEps) continue;
    for (double bound : {box.lo[k], box.hi[k]}) {
      const double t = (bound - a[k]) / d[k];
      if (t > 0.0 && t < 1.0) breaks[count++] = t;
    }
  }
  std::sort(breaks.begin(), breaks.begin() + static_cast<std::ptrdiff_t>(count));

  auto sq_dist = [&](double t) {
    const Vec3 p = a + t * d;
    return (p - closest_point_on_box(p, box)).squaredNorm();
  };

  double best_t = 0.0;
  double best = sq_dist(0.0);
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const double t0 = breaks[i];
    const double t1 = breaks[i + 1];
    if (t1 - t0 <= 0.0) continue;
    const double tm = 0.5 * (t0 + t1);
    const Vec3 pm = a + tm * d;
    // On this piece every axis is either inside its slab or clamped to one face.
    double qa = 0.0;
    double qb = 0.0;
    for (int k = 0; k < 3; ++k) {
      double face;
      if (pm[k] < box.lo[k]) {
        face = box.lo[k];
      } else if (pm[k] > box.hi[k]) {
        face = box.hi[k];
      } else {
        continue;
      }
      const double c = a[k] - face;
      qa += d[k] * d[k];
      qb += 2.0 * c * d[k];
    }
    double t = t0;
    if (qa > 0.0) t = std::clamp(-qb / (2.0 * qa), t0, t1);
    for (double cand : {t, t0, t1}) {
      const double v = sq_dist(cand);
      if (v < best) {
        best = v;
        best_t = cand;
      }
    }
  }
  ClosestPoints out;
  out.on_first = a + best_t * d;
  out.on_second = closest_point_on_box(out.on_first, box);
  out.distance = std::sqrt(best);
  return out;
}

double box_box_distance(const Aabb& a, const Aabb& b) {
  const Vec3 gap = (a.lo - b.hi).cwiseMax(b.lo - a.hi).cwiseMax(Vec3::Zero());
  return gap.norm();
}

ClosestPoints closest_points(const RobotShape& robot, const Shape& obstacle) {
  return std::visit(
      Overloaded{
          [](const Sphere& s, const Sphere& o) { return inflate(s.center, s.radius, o.center, o.radius); },
          [](const Sphere& s, const Capsule& o) {
            const Vec3 q = o.a + closest_parameter_on_segment(s.center, o.a, o.b) * (o.b - o.a);
            return inflate(s.center, s.radius, q, o.radius);
          },
          [](const Sphere& s, const Aabb& o) {
            return inflate(s.center, s.radius, closest_point_on_box(s.center, o), 0.0);
          },
          [](const Capsule& c, const Sphere& o) {
            const Vec3 p = c.a + closest_parameter_on_segment(o.center, c.a, c.b) * (c.b - c.a);
            return inflate(p, c.radius, o.center, o.radius);
          },
          [](const Capsule& c, const Capsule& o) {
            const auto [s, t] = closest_parameters_segments(c.a, c.b, o.a, o.b);
            return inflate(c.a + s * (c.b - c.a), c.radius, o.a + t * (o.b - o.a), o.radius);
          },
          [](const Capsule& c, const Aabb& o) {
            const ClosestPoints core = segment_box_closest(c.a, c.b, o);
            return inflate(core.on_first, c.radius, core.on_second, 0.0);
          },
      },
      robot, obstacle);
}

ClosestPoints closest_points(const RobotShape& first, const RobotShape& second) {
  return std::visit([&](const auto& s) { return closest_points(first, Shape{s}); }, second);
}

double distance_to_point(const RobotShape& shape, const Vec3& p) {
  return closest_points(shape, Shape{Sphere{p, 0.0}}).distance;
}

double distance_to_point(const Shape& shape, const Vec3& p) {
  return closest_points(RobotShape{Sphere{p, 0.0}}, shape).distance;
}

std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Sphere& s) {
  const Vec3 oc = origin - s.center;
  const double c = oc.squaredNorm() - s.radius * s.radius;
  if (c <= 0.0) return 0.0;
  return smallest_nonnegative_root(dir.squaredNorm(), 2.0 * oc.dot(dir), c);
}

std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Capsule& cap) {
  const Vec3 axis = cap.b - cap.a;
  const double len = axis.norm();
  if (len < kEps) return ray_hit(origin, dir, Sphere{cap.a, cap.radius});
  const Vec3 p = cap.a + closest_parameter_on_segment(origin, cap.a, cap.b) * axis;
  if ((origin - p).squaredNorm() <= cap.radius * cap.radius) return 0.0;

  std::optional<double> best;
  auto keep = [&](std::optional<double> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  keep(ray_hit(origin, dir, Sphere{cap.a, cap.radius}));
  keep(ray_hit(origin, dir, Sphere{cap.b, cap.radius}));

  const Vec3 u = axis / len;
  const Vec3 rel = origin - cap.a;
  const Vec3 d_perp = dir - dir.dot(u) * u;
  const Vec3 o_perp = rel - rel.dot(u) * u;
  if (auto t = smallest_nonnegative_root(d_perp.squaredNorm(), 2.0 * o_perp.dot(d_perp),
                                         o_perp.squaredNorm() - cap.radius * cap.radius)) {
    const double s = (rel + *t * dir).dot(u);
    if (s >= 0.0 && s <= len) keep(t);
  }
  return best;
}

std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Aabb& box) {
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dir[k]) < kEps) {
      if (origin[k] < box.lo[k] || origin[k] > box.hi[k]) return std::nullopt;
      continue;
    }
    double t0 = (box.lo[k] - origin[k]) / dir[k];
    double t1 = (box.hi[k] - origin[k]) / dir[k];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return std::nullopt;
  }
  return t_enter;
}

std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const Shape& shape) {
  return std::visit([&](const auto& s) { return ray_hit(origin, dir, s); }, shape);
}

std::optional<double> ray_hit(const Vec3& origin, const Vec3& dir, const RobotShape& shape) {
  return std::visit([&](const auto& s) { return ray_hit(origin, dir, s); }, shape);
}

std::optional<std::pair<double, double>> clip_segment_to_box(const Vec3& o, const Vec3& d,
                                                             double t_max, const Aabb& box) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < box.lo[k] || o[k] > box.hi[k]) return std::nullopt;
      continue;
    }
    double a = (box.lo[k] - o[k]) / d[k];
    double b = (box.hi[k] - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

}  // namespace safemm
