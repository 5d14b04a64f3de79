#include "safemm/path_smoothing.hpp"

#include "safemm/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safemm {

namespace {

// Length of the subpath between vertices i and k.
double span_length(const Path& path, std::size_t i, std::size_t k, const JointMetric& metric) {
  double total = 0.0;
  for (std::size_t v = i; v < k; ++v) total += metric.distance(path[v], path[v + 1]);
  return total;
}

Path remove_between(const Path& path, std::size_t i, std::size_t k) {
  Path out(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  out.insert(out.end(), path.begin() + static_cast<std::ptrdiff_t>(k), path.end());
  return out;
}

// Bypass i -> k when it is free and not longer than the vertices it replaces.
bool try_bypass(Path& path, std::size_t i, std::size_t k, const SmoothingContext& ctx) {
  if (k <= i + 1) return false;
  if (ctx.metric.distance(path[i], path[k]) > span_length(path, i, k, ctx.metric)) return false;
  if (!ctx.segment_free(path[i], path[k])) return false;
  path = remove_between(path, i, k);
  return true;
}

// Metric distance ignoring joint j.
double distance_without(const JointMetric& metric, const Configuration& a, const Configuration& b, Eigen::Index j) {
  Eigen::VectorXd d = (b - a).cwiseProduct(metric.weights);
  d[j] = 0.0;
  return d.norm();
}

double segment_time(const Configuration& a, const Configuration& b, const Eigen::VectorXd& v_max,
                    Eigen::Index skip = -1) {
  double t = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (j != skip) t = std::max(t, std::abs(b[j] - a[j]) / v_max[j]);
  }
  return t;
}

}  // namespace

SmoothingContext::SmoothingContext(const RobotModel& m, const WorldSnapshot& w)
    : SmoothingContext(m, w, default_metric(m)) {}

SmoothingContext::SmoothingContext(const RobotModel& m, const WorldSnapshot& w, JointMetric metric_,
                                   SegmentCheckConfig check_)
    : model(&m), world(&w), metric(std::move(metric_)), check(check_) {}

bool SmoothingContext::segment_free(const Configuration& a, const Configuration& b) const {
  return segment_collision_free(*model, *world, a, b, check);
}

Path shortcut(const Path& path, const SmoothingContext& ctx, ShortcutStrategy strategy, int budget,
              std::uint64_t seed) {
  Path out = path;
  switch (strategy) {
    case ShortcutStrategy::SingleVertex: {
      bool changed = true;
      while (changed) {
        changed = false;
        for (std::size_t i = 1; i + 1 < out.size();) {
          if (try_bypass(out, i - 1, i + 1, ctx)) {
            changed = true;
          } else {
            ++i;
          }
        }
      }
      break;
    }
    case ShortcutStrategy::BinaryInterval: {
      for (std::size_t i = 0; i + 2 < out.size(); ++i) {
        // Largest reachable index, assuming reachability shrinks with distance.
        std::size_t lo = i + 1;
        std::size_t hi = out.size() - 1;
        while (lo < hi) {
          const std::size_t mid = (lo + hi + 1) / 2;
          if (ctx.metric.distance(out[i], out[mid]) <= span_length(out, i, mid, ctx.metric) &&
              ctx.segment_free(out[i], out[mid])) {
            lo = mid;
          } else {
            hi = mid - 1;
          }
        }
        if (lo > i + 1) out = remove_between(out, i, lo);
      }
      break;
    }
    case ShortcutStrategy::RandomPair: {
      Rng rng(seed);
      for (int attempt = 0; attempt < budget && out.size() > 2; ++attempt) {
        std::size_t i = rng.index(out.size());
        std::size_t k = rng.index(out.size());
        if (i > k) std::swap(i, k);
        if (k < i + 2) continue;
        try_bypass(out, i, k, ctx);
      }
      break;
    }
  }
  return out;
}

Path flatten_extrema(const Path& path, const SmoothingContext& ctx) {
  Path out = path;
  if (out.size() < 3) return out;
  const Eigen::Index dof = out.front().size();
  // Neighbouring extrema can trade off against each other and only converge
  // geometrically, so anything within kExtremumTolerance counts as flat.
  constexpr double kExtremumTolerance = 1e-9;
  for (int pass = 0; pass < 100000; ++pass) {
    bool changed = false;
    for (std::size_t i = 1; i + 1 < out.size(); ++i) {
      for (Eigen::Index j = 0; j < dof; ++j) {
        const double prev = out[i - 1][j];
        const double cur = out[i][j];
        const double next = out[i + 1][j];
        const double t = kExtremumTolerance;
        const bool extremum = (cur > prev + t && cur > next + t) || (cur < prev - t && cur < next - t);
        if (!extremum) continue;
        double value = prev;
        if (prev != next) {
          const double a = distance_without(ctx.metric, out[i - 1], out[i], j);
          const double b = distance_without(ctx.metric, out[i], out[i + 1], j);
          const double share = a + b > 0.0 ? a / (a + b) : 0.5;
          value = prev + share * (next - prev);
        }
        Configuration candidate = out[i];
        candidate[j] = value;
        if (candidate == out[i - 1] || candidate == out[i + 1]) continue;
        const double before = ctx.metric.distance(out[i - 1], out[i]) + ctx.metric.distance(out[i], out[i + 1]);
        const double after = ctx.metric.distance(out[i - 1], candidate) + ctx.metric.distance(candidate, out[i + 1]);
        if (after > before) continue;
        if (!ctx.segment_free(out[i - 1], candidate) || !ctx.segment_free(candidate, out[i + 1])) continue;
        out[i] = candidate;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

Path insert_center_connections(const Path& path, const SmoothingContext& ctx, double min_length, int max_depth) {
  if (!(min_length > 0.0)) throw std::invalid_argument("minimum segment length must be positive");
  Path out = path;
  std::vector<int> depth(out.size(), 0);
  for (std::size_t i = 1; i + 1 < out.size();) {
    const double a = ctx.metric.distance(out[i - 1], out[i]);
    const double b = ctx.metric.distance(out[i], out[i + 1]);
    if (depth[i] >= max_depth || a < min_length || b < min_length) {
      ++i;
      continue;
    }
    const Configuration m1 = 0.5 * (out[i - 1] + out[i]);
    const Configuration m2 = 0.5 * (out[i] + out[i + 1]);
    const double before = ctx.metric.distance(m1, out[i]) + ctx.metric.distance(out[i], m2);
    const double after = ctx.metric.distance(m1, m2);
    if (!(after < before * (1.0 - 1e-12)) || !ctx.segment_free(m1, m2)) {
      ++i;
      continue;
    }
    // The two new corners inherit the next recursion level.
    const int level = depth[i] + 1;
    out[i] = m1;
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(i) + 1, m2);
    depth[i] = level;
    depth.insert(depth.begin() + static_cast<std::ptrdiff_t>(i) + 1, level);
  }
  return out;
}

double TimedPath::total_duration() const {
  double total = 0.0;
  for (double d : durations) total += d;
  return total;
}

TimedPath time_path(const Path& path, const Eigen::VectorXd& max_velocity) {
  if ((max_velocity.array() <= 0.0).any()) throw std::invalid_argument("joint velocities must be positive");
  TimedPath timed;
  timed.path = path;
  timed.max_velocity = max_velocity;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (path[i].size() != max_velocity.size()) throw std::invalid_argument("velocity limits do not match the path");
    timed.durations.push_back(segment_time(path[i - 1], path[i], max_velocity));
  }
  return timed;
}

TimedPath interleave_timing(const Path& path, const Eigen::VectorXd& max_velocity, const SmoothingContext* ctx) {
  TimedPath timed = time_path(path, max_velocity);
  Path& q = timed.path;
  if (q.size() < 3) return timed;
  const Eigen::Index dof = q.front().size();
  for (int pass = 0; pass < 20; ++pass) {
    bool changed = false;
    for (std::size_t i = 1; i + 1 < q.size(); ++i) {
      for (Eigen::Index j = 0; j < dof; ++j) {
        // Segment times without joint j, and joint j's motion across the vertex.
        const double a = segment_time(q[i - 1], q[i], max_velocity, j);
        const double b = segment_time(q[i], q[i + 1], max_velocity, j);
        const double v = max_velocity[j];
        const double p = q[i - 1][j];
        const double n = q[i + 1][j];
        const double x0 = q[i][j];
        const double current = std::max(a, std::abs(x0 - p) / v) + std::max(b, std::abs(n - x0) / v);
        // With s the share of |n - p| done in the first segment the cost is
        // max(a, s/v) + max(b, (L - s)/v); its minimum is max(a + b, L/v),
        // reached for s in [L - b v, a v] or [a v, L - b v].
        const double length = std::abs(n - p);
        const double best = std::max(a + b, length / v);
        if (!(best < current - 1e-12)) continue;
        const double lo = std::clamp(std::min(length - b * v, a * v), 0.0, length);
        const double hi = std::clamp(std::max(length - b * v, a * v), 0.0, length);
        const double dir = n >= p ? 1.0 : -1.0;
        // Stay as close as possible to the current split.
        const double s0 = std::clamp(dir * (x0 - p), 0.0, length);
        const double s = std::clamp(s0, lo, hi);
        Configuration candidate = q[i];
        candidate[j] = p + dir * s;
        const double after =
            segment_time(q[i - 1], candidate, max_velocity) + segment_time(candidate, q[i + 1], max_velocity);
        if (!(after < current - 1e-12)) continue;
        if (ctx && (!ctx->segment_free(q[i - 1], candidate) || !ctx->segment_free(candidate, q[i + 1]))) continue;
        q[i] = candidate;
        changed = true;
      }
    }
    if (!changed) break;
  }
  // A shift can land a vertex on its neighbour; drop the empty segment.
  q.erase(std::unique(q.begin(), q.end()), q.end());
  timed.durations.resize(q.size() - 1);
  for (std::size_t i = 1; i < q.size(); ++i) timed.durations[i - 1] = segment_time(q[i - 1], q[i], max_velocity);
  return timed;
}

Path smooth_path(const Path& path, const SmoothingContext& ctx, const SmoothingOptions& options) {
  Path out = shortcut(path, ctx, ShortcutStrategy::BinaryInterval);
  out = shortcut(out, ctx, ShortcutStrategy::RandomPair, options.random_budget, options.seed);
  out = flatten_extrema(out, ctx);
  out = insert_center_connections(out, ctx, options.center_min_length, options.center_max_depth);
  out = shortcut(out, ctx, ShortcutStrategy::SingleVertex);
  return path_length(out, ctx.metric) <= path_length(path, ctx.metric) ? out : path;
}

}  // namespace safemm
