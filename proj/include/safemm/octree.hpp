#pragma once

#include "safemm/geometry.hpp"
#include "safemm/sensing.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace safemm {

struct VoxelKey {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

std::uint64_t morton_encode(const VoxelKey& key);
VoxelKey morton_decode(std::uint64_t code);

/// Cubic workspace split into 2^depth leaves per axis.
struct GridSpec {
  Vec3 origin = Vec3::Zero();  // min corner
  double edge = 4.0;
  int depth = 6;

  /// Cube of `edge` centered at `center` with the deepest level whose leaf
  /// size is still at least `min_voxel`.
  static GridSpec cube(const Vec3& center, double edge, double min_voxel);

  int cells() const { return 1 << depth; }
  double voxel() const { return edge / cells(); }
  Aabb bounds() const { return Aabb{origin, origin + Vec3::Constant(edge)}; }
  bool contains(const VoxelKey& k) const;
  std::optional<VoxelKey> key_of(const Vec3& p) const;
  Aabb box_of(const VoxelKey& k) const;
  /// Box of the node containing `k` at `level` levels above the leaves.
  Aabb node_box(const VoxelKey& node, int level) const;
  std::size_t linear(const VoxelKey& k) const;
  VoxelKey from_linear(std::size_t index) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Dense leaf-level voxel set over a GridSpec.
class VoxelSet {
 public:
  VoxelSet() = default;
  explicit VoxelSet(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  void insert(const VoxelKey& k);
  bool contains(const VoxelKey& k) const;
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::vector<VoxelKey> keys() const;
  void for_each(const std::function<void(const VoxelKey&)>& fn) const;

  VoxelSet& operator|=(const VoxelSet& other);
  VoxelSet& operator&=(const VoxelSet& other);
  /// Set difference.
  VoxelSet& operator-=(const VoxelSet& other);
  bool is_subset_of(const VoxelSet& other) const;
  friend bool operator==(const VoxelSet& a, const VoxelSet& b) { return a.grid_ == b.grid_ && a.bits_ == b.bits_; }

 private:
  void check_grid(const VoxelSet& other) const;
  GridSpec grid_;
  std::vector<std::uint64_t> bits_;
};

VoxelSet operator|(VoxelSet a, const VoxelSet& b);
VoxelSet operator&(VoxelSet a, const VoxelSet& b);
VoxelSet operator-(VoxelSet a, const VoxelSet& b);

/// Voxels visited by the segment origin->end inside the grid, in order, with
/// the entry/exit segment parameters (0 at origin, 1 at end).
void traverse_voxels(const Vec3& origin, const Vec3& end, const GridSpec& grid,
                     const std::function<void(const VoxelKey&, double, double)>& visit);
std::vector<VoxelKey> raytrace_voxels(const Vec3& origin, const Vec3& end, const GridSpec& grid);

/// Per-sensor classification of the workspace.
struct SensorView {
  int sensor_id = 0;
  double timestamp = 0.0;
  VoxelSet points;    // voxels containing an obstacle point
  VoxelSet obstacle;  // occupied or occluded by an obstacle
  VoxelSet robot;     // occupied or occluded by the robot
  VoxelSet fov;       // traversed by the sensor's rays
  VoxelSet free;      // fov minus (obstacle | robot)

  const GridSpec& grid() const { return fov.grid(); }
};

SensorView preprocess_sensor(const PointCloud& cloud, const Transform& sensor_pose,
                             const DepthSensorSpec& spec, const GridSpec& grid, double timestamp = 0.0);

enum class NodeState : std::uint8_t { Unknown, Free, ObstaclePoint, ObstacleOccluded, Robot };

const char* to_string(NodeState state);

/// Fused workspace model. Leaf states are stored densely in grid order;
/// coarser levels are implicit in the Morton code (code >> 3 * level).
class Octree {
 public:
  Octree() = default;
  explicit Octree(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  void set(const VoxelKey& k, NodeState state);
  NodeState state(const VoxelKey& k) const;
  std::size_t count(NodeState state) const;
  /// Number of leaves with a known state.
  std::size_t stored() const { return stored_; }
  bool is_obstacle(const VoxelKey& k) const;
  std::vector<VoxelKey> keys(NodeState state) const;
  std::vector<VoxelKey> obstacle_keys() const;
  /// True when any leaf below the node at `level` is an obstacle.
  bool node_has_obstacle(const VoxelKey& node, int level) const;
  /// Calls fn(key, state) for every leaf with a known state, in grid order.
  void for_each_leaf(const std::function<void(const VoxelKey&, NodeState)>& fn) const;
  friend bool operator==(const Octree& a, const Octree& b) { return a.grid_ == b.grid_ && a.cells_ == b.cells_; }

  /// One line per stored leaf, "x y z state", sorted by key.
  void dump(std::ostream& out) const;

 private:
  GridSpec grid_;
  std::vector<NodeState> cells_;
  std::size_t stored_ = 0;
};

/// Merges sensor views: occluded space of one sensor that another sensor sees
/// as free is dropped, and the remaining obstacle space of all sensors is united.
Octree fuse(const std::vector<SensorView>& views);

/// Bounds of every obstacle-point and obstacle-occluded leaf.
std::vector<Aabb> obstacle_cells(const Octree& octree);

}  // namespace safemm
