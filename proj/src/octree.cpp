#include "safemm/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace safemm {

namespace {

std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffff;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

std::uint64_t compact_bits(std::uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffff;
  return v;
}

}  // namespace

std::uint64_t morton_encode(const VoxelKey& key) {
  return spread_bits(static_cast<std::uint64_t>(key.x)) | spread_bits(static_cast<std::uint64_t>(key.y)) << 1 |
         spread_bits(static_cast<std::uint64_t>(key.z)) << 2;
}

VoxelKey morton_decode(std::uint64_t code) {
  return VoxelKey{static_cast<int>(compact_bits(code)), static_cast<int>(compact_bits(code >> 1)),
                  static_cast<int>(compact_bits(code >> 2))};
}

GridSpec GridSpec::cube(const Vec3& center, double edge, double min_voxel) {
  if (!(edge > 0.0) || !(min_voxel > 0.0) || min_voxel > edge) {
    throw std::invalid_argument("grid needs 0 < min_voxel <= edge");
  }
  GridSpec g;
  g.edge = edge;
  g.depth = static_cast<int>(std::floor(std::log2(edge / min_voxel) + 1e-12));
  g.depth = std::clamp(g.depth, 0, 20);
  g.origin = center - Vec3::Constant(0.5 * edge);
  return g;
}

bool GridSpec::contains(const VoxelKey& k) const {
  const int n = cells();
  return k.x >= 0 && k.y >= 0 && k.z >= 0 && k.x < n && k.y < n && k.z < n;
}

std::optional<VoxelKey> GridSpec::key_of(const Vec3& p) const {
  const Vec3 rel = (p - origin) / voxel();
  const int n = cells();
  int idx[3];
  for (int k = 0; k < 3; ++k) {
    if (!(rel[k] >= 0.0 && rel[k] <= n)) return std::nullopt;
    idx[k] = std::min(static_cast<int>(std::floor(rel[k])), n - 1);
  }
  return VoxelKey{idx[0], idx[1], idx[2]};
}

Aabb GridSpec::box_of(const VoxelKey& k) const { return node_box(k, 0); }

Aabb GridSpec::node_box(const VoxelKey& node, int level) const {
  const double size = voxel() * static_cast<double>(1 << level);
  const Vec3 lo = origin + size * Vec3(node.x, node.y, node.z);
  return Aabb{lo, lo + Vec3::Constant(size)};
}

std::size_t GridSpec::linear(const VoxelKey& k) const {
  const auto n = static_cast<std::size_t>(cells());
  return (static_cast<std::size_t>(k.z) * n + static_cast<std::size_t>(k.y)) * n + static_cast<std::size_t>(k.x);
}

VoxelKey GridSpec::from_linear(std::size_t index) const {
  const auto n = static_cast<std::size_t>(cells());
  return VoxelKey{static_cast<int>(index % n), static_cast<int>((index / n) % n), static_cast<int>(index / (n * n))};
}

VoxelSet::VoxelSet(const GridSpec& grid) : grid_(grid) {
  const auto n = static_cast<std::size_t>(grid.cells());
  bits_.assign((n * n * n + 63) / 64, 0);
}

void VoxelSet::insert(const VoxelKey& k) {
  const std::size_t i = grid_.linear(k);
  bits_[i / 64] |= std::uint64_t{1} << (i % 64);
}

bool VoxelSet::contains(const VoxelKey& k) const {
  if (!grid_.contains(k) || bits_.empty()) return false;
  const std::size_t i = grid_.linear(k);
  return (bits_[i / 64] >> (i % 64)) & 1U;
}

std::size_t VoxelSet::size() const {
  std::size_t n = 0;
  for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

void VoxelSet::for_each(const std::function<void(const VoxelKey&)>& fn) const {
  for (std::size_t w = 0; w < bits_.size(); ++w) {
    std::uint64_t word = bits_[w];
    while (word) {
      const int bit = std::countr_zero(word);
      fn(grid_.from_linear(w * 64 + static_cast<std::size_t>(bit)));
      word &= word - 1;
    }
  }
}

std::vector<VoxelKey> VoxelSet::keys() const {
  std::vector<VoxelKey> out;
  out.reserve(size());
  for_each([&](const VoxelKey& k) { out.push_back(k); });
  return out;
}

void VoxelSet::check_grid(const VoxelSet& other) const {
  if (!(grid_ == other.grid_)) throw std::invalid_argument("voxel sets live on different grids");
}

VoxelSet& VoxelSet::operator|=(const VoxelSet& other) {
  check_grid(other);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
  return *this;
}

VoxelSet& VoxelSet::operator&=(const VoxelSet& other) {
  check_grid(other);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= other.bits_[i];
  return *this;
}

VoxelSet& VoxelSet::operator-=(const VoxelSet& other) {
  check_grid(other);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= ~other.bits_[i];
  return *this;
}

bool VoxelSet::is_subset_of(const VoxelSet& other) const {
  check_grid(other);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] & ~other.bits_[i]) return false;
  }
  return true;
}

VoxelSet operator|(VoxelSet a, const VoxelSet& b) { return a |= b; }
VoxelSet operator&(VoxelSet a, const VoxelSet& b) { return a &= b; }
VoxelSet operator-(VoxelSet a, const VoxelSet& b) { return a -= b; }

void traverse_voxels(const Vec3& origin, const Vec3& end, const GridSpec& grid,
                     const std::function<void(const VoxelKey&, double, double)>& visit) {
  const Vec3 d = end - origin;
  if (d.squaredNorm() == 0.0) {
    if (auto k = grid.key_of(origin)) visit(*k, 0.0, 0.0);
    return;
  }
  const auto clip = clip_segment_to_box(origin, d, 1.0, grid.bounds());
  if (!clip) return;
  double t = clip->first;
  const double t_end = clip->second;

  const int n = grid.cells();
  const double v = grid.voxel();
  const Vec3 start = origin + t * d;
  int idx[3];
  int step[3];
  for (int k = 0; k < 3; ++k) {
    const double rel = (start[k] - grid.origin[k]) / v;
    int i = static_cast<int>(std::floor(rel));
    // On a cell boundary, a ray heading down belongs to the lower cell.
    if (d[k] < 0.0 && rel == std::floor(rel)) --i;
    idx[k] = std::clamp(i, 0, n - 1);
    step[k] = d[k] > 0.0 ? 1 : (d[k] < 0.0 ? -1 : 0);
  }
  auto boundary_t = [&](int k) {
    if (step[k] == 0) return std::numeric_limits<double>::infinity();
    const double plane = grid.origin[k] + v * (step[k] > 0 ? idx[k] + 1 : idx[k]);
    return (plane - origin[k]) / d[k];
  };
  double next[3] = {boundary_t(0), boundary_t(1), boundary_t(2)};

  bool visited_any = false;
  while (true) {
    int axis = 0;
    if (next[1] < next[axis]) axis = 1;
    if (next[2] < next[axis]) axis = 2;
    const double t_exit = std::min(next[axis], t_end);
    if (t_exit > t || (!visited_any && t_exit >= t)) {
      visit(VoxelKey{idx[0], idx[1], idx[2]}, t, std::max(t, t_exit));
      visited_any = true;
    }
    if (next[axis] >= t_end) break;
    idx[axis] += step[axis];
    if (idx[axis] < 0 || idx[axis] >= n) break;
    t = std::max(t, next[axis]);
    next[axis] = boundary_t(axis);
  }
}

std::vector<VoxelKey> raytrace_voxels(const Vec3& origin, const Vec3& end, const GridSpec& grid) {
  std::vector<VoxelKey> out;
  traverse_voxels(origin, end, grid, [&](const VoxelKey& k, double, double) { out.push_back(k); });
  return out;
}

SensorView preprocess_sensor(const PointCloud& cloud, const Transform& sensor_pose, const DepthSensorSpec& spec,
                             const GridSpec& grid, double timestamp) {
  SensorView view;
  view.sensor_id = spec.id;
  view.timestamp = timestamp;
  view.points = VoxelSet(grid);
  view.obstacle = VoxelSet(grid);
  view.robot = VoxelSet(grid);
  view.fov = VoxelSet(grid);

  const Vec3 origin = sensor_pose.translation();
  for (const Vec3& dir : sensor_fov_rays(spec)) {
    const Vec3 end = origin + spec.max_range * (sensor_pose.linear() * dir);
    traverse_voxels(origin, end, grid, [&](const VoxelKey& k, double, double) { view.fov.insert(k); });
  }

  for (const auto& p : cloud.points) {
    if (p.cls == PointClass::MaxRange) continue;
    VoxelSet& target = p.cls == PointClass::Obstacle ? view.obstacle : view.robot;
    if (p.cls == PointClass::Obstacle) {
      if (auto k = grid.key_of(p.position)) view.points.insert(*k);
    }
    const Vec3 ray = p.position - origin;
    const double len = ray.norm();
    if (len <= 0.0) {
      if (auto k = grid.key_of(p.position)) target.insert(*k);
      continue;
    }
    // Everything from the hit to the end of the ray is hidden behind it.
    const Vec3 shadow_end = origin + std::max(spec.max_range, len) * (ray / len);
    traverse_voxels(p.position, shadow_end, grid, [&](const VoxelKey& k, double, double) { target.insert(k); });
  }
  view.obstacle |= view.points;
  // Hit voxels are seen by construction; keep P ⊆ O ⊆ V exact under rounding.
  view.fov |= view.obstacle;
  view.fov |= view.robot;
  view.free = view.fov - (view.obstacle | view.robot);
  return view;
}

const char* to_string(NodeState state) {
  switch (state) {
    case NodeState::Unknown:
      return "unknown";
    case NodeState::Free:
      return "free";
    case NodeState::ObstaclePoint:
      return "obstacle-point";
    case NodeState::ObstacleOccluded:
      return "obstacle-occluded";
    case NodeState::Robot:
      return "robot";
  }
  return "unknown";
}

Octree::Octree(const GridSpec& grid) : grid_(grid) {
  const auto n = static_cast<std::size_t>(grid.cells());
  cells_.assign(n * n * n, NodeState::Unknown);
}

void Octree::set(const VoxelKey& k, NodeState state) {
  if (!grid_.contains(k)) throw std::invalid_argument("voxel key outside octree bounds");
  NodeState& cell = cells_[grid_.linear(k)];
  stored_ += (state != NodeState::Unknown) - (cell != NodeState::Unknown);
  cell = state;
}

NodeState Octree::state(const VoxelKey& k) const {
  if (cells_.empty() || !grid_.contains(k)) return NodeState::Unknown;
  return cells_[grid_.linear(k)];
}

std::size_t Octree::count(NodeState state) const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), state));
}

bool Octree::is_obstacle(const VoxelKey& k) const {
  const NodeState s = state(k);
  return s == NodeState::ObstaclePoint || s == NodeState::ObstacleOccluded;
}

void Octree::for_each_leaf(const std::function<void(const VoxelKey&, NodeState)>& fn) const {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] != NodeState::Unknown) fn(grid_.from_linear(i), cells_[i]);
  }
}

std::vector<VoxelKey> Octree::keys(NodeState state) const {
  std::vector<VoxelKey> out;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] == state) out.push_back(grid_.from_linear(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<VoxelKey> Octree::obstacle_keys() const {
  std::vector<VoxelKey> out;
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i] == NodeState::ObstaclePoint || cells_[i] == NodeState::ObstacleOccluded) {
      out.push_back(grid_.from_linear(i));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool Octree::node_has_obstacle(const VoxelKey& node, int level) const {
  const int span = 1 << level;
  for (int z = node.z * span; z < (node.z + 1) * span; ++z) {
    for (int y = node.y * span; y < (node.y + 1) * span; ++y) {
      for (int x = node.x * span; x < (node.x + 1) * span; ++x) {
        if (is_obstacle(VoxelKey{x, y, z})) return true;
      }
    }
  }
  return false;
}

void Octree::dump(std::ostream& out) const {
  std::vector<VoxelKey> known;
  known.reserve(stored_);
  for_each_leaf([&](const VoxelKey& k, NodeState) { known.push_back(k); });
  std::sort(known.begin(), known.end());
  for (const auto& k : known) out << k.x << ' ' << k.y << ' ' << k.z << ' ' << to_string(state(k)) << '\n';
}

Octree fuse(const std::vector<SensorView>& views) {
  if (views.empty()) throw std::invalid_argument("fusion needs at least one sensor view");
  const GridSpec grid = views.front().grid();
  for (const auto& v : views) {
    if (!(v.grid() == grid)) throw std::invalid_argument("sensor views use different octree specs");
    if (std::abs(v.timestamp - views.front().timestamp) > 1e-9) {
      throw std::invalid_argument("sensor views have different timestamps");
    }
  }
  const std::size_t n = views.size();
  // prefix[i] = F_0 | ... | F_{i-1}, suffix[i] = F_i | ... | F_{n-1}
  std::vector<VoxelSet> prefix(n + 1, VoxelSet(grid));
  std::vector<VoxelSet> suffix(n + 1, VoxelSet(grid));
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] | views[i].free;
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] | views[i].free;

  VoxelSet points(grid);
  VoxelSet obstacle(grid);
  VoxelSet robot(grid);
  VoxelSet free(grid);
  for (std::size_t i = 0; i < n; ++i) {
    const VoxelSet others_free = prefix[i] | suffix[i + 1];
    points |= views[i].points;
    obstacle |= views[i].points;
    obstacle |= views[i].obstacle - others_free;
    robot |= views[i].robot;
    free |= views[i].free;
  }
  robot -= obstacle;
  free -= obstacle;
  free -= robot;

  Octree tree(grid);
  free.for_each([&](const VoxelKey& k) { tree.set(k, NodeState::Free); });
  robot.for_each([&](const VoxelKey& k) { tree.set(k, NodeState::Robot); });
  (obstacle - points).for_each([&](const VoxelKey& k) { tree.set(k, NodeState::ObstacleOccluded); });
  points.for_each([&](const VoxelKey& k) { tree.set(k, NodeState::ObstaclePoint); });
  return tree;
}

std::vector<Aabb> obstacle_cells(const Octree& octree) {
  std::vector<Aabb> out;
  for (const auto& k : octree.obstacle_keys()) out.push_back(octree.grid().box_of(k));
  return out;
}

}  // namespace safemm
