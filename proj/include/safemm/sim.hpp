#pragma once

#include "safemm/elastic_band.hpp"
#include "safemm/scenario.hpp"
#include "safemm/tracking.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace safemm {

struct TrackState {
  int id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

/// Ground-plane footprint of an obstacle: center and bounding radius.
struct Footprint {
  int id = 0;
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
};

/// One trace row. Distances are measured at the start of the tick, before the
/// robot moves by speed_scale times its nominal step.
struct TraceRecord {
  long tick = 0;
  double time = 0.0;
  /// Index of the active task, or the task count once all are finished.
  int task = 0;
  std::string phase;
  Configuration q;
  Vec3 ee = Vec3::Zero();
  double speed_scale = 0.0;
  /// Clearance to everything the robot knows of: map and fused octree.
  double min_distance = kInfiniteDistance;
  /// Clearance to the fused octree only.
  double sensed_distance = kInfiniteDistance;
  double predicted_distance = kInfiniteDistance;
  /// Clearance to the true scene geometry.
  double true_distance = kInfiniteDistance;
  std::string band_status = "none";
  int band_size = 0;
  double band_clearance = kInfiniteDistance;
  std::vector<TrackState> tracks;
  std::vector<Footprint> obstacles;
  /// End-effector positions of the band bubbles, ground plane.
  std::vector<Vec2> band;
};

/// Header line for a robot with `dof` joints, without the newline.
std::string trace_header(std::size_t dof);
/// One CSV row; floats use 9 significant digits.
std::string format_trace_row(const TraceRecord& r);
void write_trace(std::ostream& out, const std::vector<TraceRecord>& rows);
/// Throws ConfigError on a malformed trace.
std::vector<TraceRecord> read_trace(std::istream& in);
std::vector<TraceRecord> read_trace_file(const std::string& path);

struct TraceMetrics {
  std::size_t ticks = 0;
  /// Euclidean joint-space length of the executed motion.
  double path_length = 0.0;
  double ee_path_length = 0.0;
  /// Time of the first row with every task finished, else of the last row.
  double makespan = 0.0;
  double min_clearance = kInfiniteDistance;
  double min_true_clearance = kInfiniteDistance;
  /// Smallest min_distance among rows with a positive speed scale.
  double min_moving_clearance = kInfiniteDistance;
  /// Share of move and act rows with zero speed scale.
  double stop_fraction = 0.0;
};

TraceMetrics compute_metrics(const std::vector<TraceRecord>& rows);
std::string format_metrics(const TraceMetrics& m);

enum class TaskStatus { Pending, Active, Succeeded, Failed };
const char* to_string(TaskStatus status);

struct TaskOutcome {
  std::string name;
  TaskKind kind = TaskKind::Pick;
  TaskStatus status = TaskStatus::Pending;
  std::string reason;
  int plans = 0;
  double finished_at = 0.0;
};

/// Closed loop of sensing, fusion, tracking, planning, band adaptation and
/// execution, ticking a flat task sequencer (plan, move, act, next).
class Simulator {
 public:
  explicit Simulator(Scenario scenario);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  /// Runs one tick and returns its record.
  TraceRecord tick();
  /// True once every task finished or the duration elapsed.
  bool finished() const;

  const Scenario& scenario() const { return scenario_; }
  const std::vector<TaskOutcome>& tasks() const { return outcomes_; }
  const Configuration& configuration() const;
  /// Map obstacles with their current class and position.
  const WorldSnapshot& map_world() const;
  /// What the controller plans against: map plus fused octree.
  const WorldSnapshot& perceived_world() const;
  const ElasticBand* band() const;
  double time() const;
  /// Messages about task transitions, in order.
  void set_logger(std::function<void(const std::string&)> logger);

 private:
  struct State;
  Scenario scenario_;
  std::vector<TaskOutcome> outcomes_;
  std::unique_ptr<State> state_;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<long> max_ticks;
  std::function<void(const std::string&)> logger;
};

struct RunResult {
  /// 0 when every task succeeded, 2 otherwise.
  int exit_code = 0;
  std::vector<TaskOutcome> tasks;
  std::vector<TraceRecord> trace;
  TraceMetrics metrics;
};

/// Ticks until finished() or max_ticks. Unfinished tasks count as failed.
RunResult run_scenario(Scenario scenario, const RunOptions& options = {});

}  // namespace safemm
