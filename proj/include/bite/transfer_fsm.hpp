#pragma once

#include "bite/controller.hpp"
#include "bite/geometry.hpp"
#include "bite/phase.hpp"

#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

namespace bite::fsm {

enum class SegmentKind { Arc, LinearEntry, Dwell, LinearExit, ArcReturn };

std::string_view to_string(SegmentKind kind);

struct Waypoint {
  double t = 0.0;
  Pose pose;
};

struct Segment {
  SegmentKind kind;
  std::size_t first = 0;  // inclusive waypoint range
  std::size_t last = 0;
};

/// Time-stamped poses with labelled segments. Adjacent segments share their
/// boundary waypoint.
class TrajectoryPlan {
 public:
  TrajectoryPlan() = default;
  TrajectoryPlan(std::vector<Waypoint> waypoints, SegmentKind kind);

  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  const std::vector<Segment>& segments() const { return segments_; }
  bool empty() const { return waypoints_.empty(); }
  double start_time() const { return waypoints_.front().t; }
  double end_time() const { return waypoints_.back().t; }
  double duration() const { return empty() ? 0.0 : end_time() - start_time(); }

  /// Appends `next`, shifting its clock to start at end_time(). The first
  /// waypoint of `next` must coincide with the current last pose.
  void append(const TrajectoryPlan& next);

  /// First segment of the given kind; throws std::out_of_range if absent.
  const Segment& segment(SegmentKind kind) const;
  double segment_start(const Segment& s) const { return waypoints_[s.first].t; }
  double segment_duration(const Segment& s) const {
    return waypoints_[s.last].t - waypoints_[s.first].t;
  }

  /// Pose at absolute plan time t inside segment s.
  Pose sample(const Segment& s, double t) const;

 private:
  std::vector<Waypoint> waypoints_;
  std::vector<Segment> segments_;
};

/// Lerp/slerp between bracketing waypoints; exact at waypoint times.
/// Throws std::out_of_range outside the plan's span.
Pose interpolate(const TrajectoryPlan& plan, double t);

/// Quintic time scaling on [0, 1] with zero end velocities.
double smooth_step(double u);

/// Circular arc in the vertical plane through the target that contains
/// `outward` (mouth z). The center sits `radius` straight below the target;
/// angles are measured from horizontal toward `outward`, so the target is at
/// +pi/2. Orientation is held at the target orientation.
TrajectoryPlan plan_arc(const Pose& target_pre_mouth, double radius, double start_angle,
                        double duration, double sample_rate, const Vector3& outward);

Vector3 arc_center(const Pose& target_pre_mouth, double radius);

/// Moves entry_depth along -z of the mouth frame, then lowers by `lowering`
/// along -y. Zero depth and lowering yields a dwell.
TrajectoryPlan entry_segment(const Pose& pre_mouth, const Pose& mouth_frame, double entry_depth,
                             double lowering, double duration, double sample_rate);

TrajectoryPlan linear_segment(const Pose& from, const Pose& to, double duration,
                              double sample_rate, SegmentKind kind);

TrajectoryPlan dwell_segment(const Pose& pose, double duration, double sample_rate);

/// Same poses traversed backwards in time.
TrajectoryPlan reversed(const TrajectoryPlan& plan, SegmentKind kind);

/// Fork orientation for the transfer: upside down relative to the scan pose
/// and pitched up by `pitch` about the mouth x axis.
Quaternion transfer_orientation(const Pose& mouth_frame, double pitch);

/// Upright fork (tines toward the camera) used for the depth scan.
Quaternion scan_orientation(const Pose& mouth_frame, double pitch);

/// Rotation taking the scan orientation to the transfer orientation (in the
/// fork frame): a half turn about the fork's long axis.
Quaternion fork_flip();

struct PlanParams {
  double radius = 0.45;
  double start_angle = 0.0;
  double pitch = 25.0 * std::numbers::pi / 180.0;
  double entry_depth = 0.018;
  double lowering = 0.003;
  double approach_duration = 4.0;
  double entry_duration = 1.5;
  double dwell_duration = 0.5;
  double exit_duration = 1.5;
  double retract_duration = 2.5;
  double sample_rate = 1000.0;
};

/// Arc, entry, nominal dwell, exit back to the pre-mouth pose, return arc.
TrajectoryPlan build_transfer_plan(const Pose& pre_mouth, const Pose& mouth_frame,
                                   const PlanParams& params);

enum class BiteResult { Waiting, Bitten, TimedOut };

struct BiteDetector {
  double threshold = 0.3;  // N
  Vector3 axis = Vector3::UnitY();  // mouth y in the measurement frame
  double timeout = 1.5;  // s
  double elapsed = 0.0;
  int debounce_ticks = 1;
  int above_count = 0;

  void validate() const;
};

struct BiteUpdate {
  BiteResult result;
  BiteDetector detector;
};

BiteUpdate detect_bite(const BiteDetector& det, const controller::Wrench& f_m, double dt);

struct Event {
  double t = 0.0;
  TransferPhase from;
  TransferPhase to;
  std::string name;
  double f_y = 0.0;
};

struct FsmContext {
  TransferPhase phase = TransferPhase::Scan;
  double phase_start = 0.0;
  BiteDetector detector;
  Pose last_setpoint;
  bool has_setpoint = false;
};

struct Sensors {
  controller::Wrench f_m;
  double clock = 0.0;
  bool safety_abort = false;
  double dt = controller::kTickPeriod;
};

struct StepResult {
  FsmContext context;
  Pose setpoint;
  std::vector<Event> events;
};

/// One tick of the transfer protocol. Scan and FaceDetect complete without
/// motion; a segment finishes on the tick its duration is reached, and the
/// next phase starts at that boundary. BiteWait holds the entry end pose and
/// starts detecting on the following tick.
StepResult step(const FsmContext& ctx, const TrajectoryPlan& plan, const Sensors& sensors);

/// Setpoint of a motion phase at time tau since the phase started.
Pose phase_setpoint(const TrajectoryPlan& plan, TransferPhase phase, double tau);

}  // namespace bite::fsm
