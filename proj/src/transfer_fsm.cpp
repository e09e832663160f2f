#include "bite/transfer_fsm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bite::fsm {

namespace {

constexpr double kTimeEps = 1e-9;

std::size_t waypoint_count(double duration, double sample_rate) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("segment duration must be positive");
  }
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw std::invalid_argument("sample rate must be positive");
  }
  return static_cast<std::size_t>(std::llround(duration * sample_rate)) + 1;
}

double sample_time(double duration, std::size_t i, std::size_t n) {
  if (i + 1 == n) return duration;
  return duration * static_cast<double>(i) / static_cast<double>(n - 1);
}

Pose interpolate_range(const std::vector<Waypoint>& w, std::size_t first, std::size_t last,
                       double t) {
  if (t < w[first].t - kTimeEps || t > w[last].t + kTimeEps) {
    throw std::out_of_range("time outside plan span");
  }
  if (t <= w[first].t) return w[first].pose;
  if (t >= w[last].t) return w[last].pose;
  const auto begin = w.begin() + static_cast<std::ptrdiff_t>(first);
  const auto end = w.begin() + static_cast<std::ptrdiff_t>(last) + 1;
  const auto hi = std::upper_bound(begin, end, t,
                                   [](double v, const Waypoint& wp) { return v < wp.t; });
  const auto lo = hi - 1;
  if (lo->t == t) return lo->pose;
  const double s = (t - lo->t) / (hi->t - lo->t);
  return slerp(lo->pose, hi->pose, s);
}

SegmentKind segment_for(TransferPhase phase) {
  switch (phase) {
    case TransferPhase::ApproachArc: return SegmentKind::Arc;
    case TransferPhase::Entry: return SegmentKind::LinearEntry;
    case TransferPhase::Exit: return SegmentKind::LinearExit;
    case TransferPhase::RetractArc: return SegmentKind::ArcReturn;
    default: throw std::invalid_argument("phase has no motion segment");
  }
}

TransferPhase next_motion_phase(TransferPhase phase) {
  switch (phase) {
    case TransferPhase::ApproachArc: return TransferPhase::Entry;
    case TransferPhase::Entry: return TransferPhase::BiteWait;
    case TransferPhase::Exit: return TransferPhase::RetractArc;
    case TransferPhase::RetractArc: return TransferPhase::Done;
    default: throw std::invalid_argument("phase has no motion segment");
  }
}

const char* completion_event(TransferPhase phase) {
  switch (phase) {
    case TransferPhase::ApproachArc: return "arc_complete";
    case TransferPhase::Entry: return "entry_complete";
    case TransferPhase::Exit: return "exit_complete";
    default: return "retract_complete";
  }
}

Vector3 horizontal(const Vector3& v) {
  Vector3 h(v.x(), v.y(), 0.0);
  const double n = h.norm();
  if (n < 1e-9) throw std::invalid_argument("outward direction has no horizontal component");
  return h / n;
}

}  // namespace

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Arc: return "arc";
    case SegmentKind::LinearEntry: return "linear-entry";
    case SegmentKind::Dwell: return "dwell";
    case SegmentKind::LinearExit: return "linear-exit";
    case SegmentKind::ArcReturn: return "arc-return";
  }
  return "unknown";
}

TrajectoryPlan::TrajectoryPlan(std::vector<Waypoint> waypoints, SegmentKind kind)
    : waypoints_(std::move(waypoints)) {
  if (waypoints_.empty()) throw std::invalid_argument("plan needs at least one waypoint");
  for (std::size_t i = 1; i < waypoints_.size(); ++i) {
    if (!(waypoints_[i].t > waypoints_[i - 1].t)) {
      throw std::invalid_argument("waypoint times must be strictly increasing");
    }
  }
  segments_.push_back({kind, 0, waypoints_.size() - 1});
}

void TrajectoryPlan::append(const TrajectoryPlan& next) {
  if (next.empty()) return;
  if (empty()) {
    *this = next;
    return;
  }
  const Pose& tail = waypoints_.back().pose;
  const Pose& head = next.waypoints_.front().pose;
  if ((tail.position - head.position).norm() > 1e-9 ||
      quaternion_distance(tail.orientation, head.orientation) > 1e-9) {
    throw std::invalid_argument("appended segment does not start at the plan's last pose");
  }
  const double shift = end_time() - next.start_time();
  const std::size_t offset = waypoints_.size() - 1;
  for (std::size_t i = 1; i < next.waypoints_.size(); ++i) {
    waypoints_.push_back({next.waypoints_[i].t + shift, next.waypoints_[i].pose});
  }
  for (const Segment& s : next.segments_) segments_.push_back({s.kind, s.first + offset, s.last + offset});
}

const Segment& TrajectoryPlan::segment(SegmentKind kind) const {
  for (const Segment& s : segments_) {
    if (s.kind == kind) return s;
  }
  throw std::out_of_range("plan has no " + std::string(to_string(kind)) + " segment");
}

Pose TrajectoryPlan::sample(const Segment& s, double t) const {
  return interpolate_range(waypoints_, s.first, s.last, t);
}

Pose interpolate(const TrajectoryPlan& plan, double t) {
  if (plan.empty()) throw std::out_of_range("empty plan");
  return interpolate_range(plan.waypoints(), 0, plan.waypoints().size() - 1, t);
}

double smooth_step(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

Vector3 arc_center(const Pose& target_pre_mouth, double radius) {
  return target_pre_mouth.position - radius * Vector3::UnitZ();
}

TrajectoryPlan plan_arc(const Pose& target_pre_mouth, double radius, double start_angle,
                        double duration, double sample_rate, const Vector3& outward) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("degenerate arc radius");
  const std::size_t n = waypoint_count(duration, sample_rate);
  const Vector3 h = horizontal(outward);
  const Vector3 up = Vector3::UnitZ();
  const Vector3 center = arc_center(target_pre_mouth, radius);
  const double end_angle = std::numbers::pi / 2.0;

  std::vector<Waypoint> w;
  w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_time(duration, i, n);
    const double a = start_angle + (end_angle - start_angle) * smooth_step(t / duration);
    Vector3 p = center + radius * (std::cos(a) * h + std::sin(a) * up);
    if (i + 1 == n) p = target_pre_mouth.position;
    w.push_back({t, Pose(p, target_pre_mouth.orientation)});
  }
  return {std::move(w), SegmentKind::Arc};
}

TrajectoryPlan entry_segment(const Pose& pre_mouth, const Pose& mouth_frame, double entry_depth,
                             double lowering, double duration, double sample_rate) {
  if (entry_depth < 0.0 || lowering < 0.0) throw std::invalid_argument("negative entry distance");
  const std::size_t n = waypoint_count(duration, sample_rate);
  const Matrix3 r = mouth_frame.rotation();
  const Vector3 inward = -r.col(2);
  const Vector3 down = -r.col(1);
  const Vector3 mid = pre_mouth.position + entry_depth * inward;
  const Vector3 end = mid + lowering * down;
  const double total = entry_depth + lowering;
  const double t_split = total > 0.0 ? duration * entry_depth / total : duration;

  std::vector<Waypoint> w;
  w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_time(duration, i, n);
    Vector3 p;
    if (i + 1 == n) {
      p = end;
    } else if (t <= t_split) {
      p = pre_mouth.position + entry_depth * smooth_step(t / t_split) * inward;
    } else {
      p = mid + lowering * smooth_step((t - t_split) / (duration - t_split)) * down;
    }
    w.push_back({t, Pose(p, pre_mouth.orientation)});
  }
  return {std::move(w), total > 0.0 ? SegmentKind::LinearEntry : SegmentKind::Dwell};
}

TrajectoryPlan linear_segment(const Pose& from, const Pose& to, double duration,
                              double sample_rate, SegmentKind kind) {
  const std::size_t n = waypoint_count(duration, sample_rate);
  std::vector<Waypoint> w;
  w.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_time(duration, i, n);
    if (i == 0) {
      w.push_back({t, from});
    } else if (i + 1 == n) {
      w.push_back({t, to});
    } else {
      w.push_back({t, slerp(from, to, smooth_step(t / duration))});
    }
  }
  return {std::move(w), kind};
}

TrajectoryPlan dwell_segment(const Pose& pose, double duration, double sample_rate) {
  return linear_segment(pose, pose, duration, sample_rate, SegmentKind::Dwell);
}

TrajectoryPlan reversed(const TrajectoryPlan& plan, SegmentKind kind) {
  const auto& src = plan.waypoints();
  std::vector<Waypoint> w;
  w.reserve(src.size());
  const double end = plan.end_time();
  for (auto it = src.rbegin(); it != src.rend(); ++it) w.push_back({end - it->t, it->pose});
  return {std::move(w), kind};
}

Quaternion fork_flip() { return axis_angle(Vector3::UnitZ(), std::numbers::pi); }

Quaternion scan_orientation(const Pose& mouth_frame, double pitch) {
  return (transfer_orientation(mouth_frame, pitch) * fork_flip().conjugate()).normalized();
}

Quaternion transfer_orientation(const Pose& mouth_frame, double pitch) {
  // Fork frame in mouth coordinates: x along the lips, y down, tines (z)
  // into the mouth.
  const Quaternion local = from_axes(Vector3::UnitX(), -Vector3::UnitY(), -Vector3::UnitZ());
  return (mouth_frame.orientation * axis_angle(Vector3::UnitX(), pitch) * local).normalized();
}

TrajectoryPlan build_transfer_plan(const Pose& pre_mouth, const Pose& mouth_frame,
                                   const PlanParams& p) {
  const Vector3 outward = mouth_frame.rotation().col(2);
  TrajectoryPlan approach =
      plan_arc(pre_mouth, p.radius, p.start_angle, p.approach_duration, p.sample_rate, outward);
  TrajectoryPlan entry = entry_segment(pre_mouth, mouth_frame, p.entry_depth, p.lowering,
                                       p.entry_duration, p.sample_rate);
  const Pose inside = entry.waypoints().back().pose;

  TrajectoryPlan plan = approach;
  plan.append(entry);
  plan.append(dwell_segment(inside, p.dwell_duration, p.sample_rate));
  plan.append(linear_segment(inside, pre_mouth, p.exit_duration, p.sample_rate,
                             SegmentKind::LinearExit));
  plan.append(reversed(plan_arc(pre_mouth, p.radius, p.start_angle, p.retract_duration,
                                p.sample_rate, outward),
                       SegmentKind::ArcReturn));
  return plan;
}

void BiteDetector::validate() const {
  if (!(threshold > 0.0)) throw std::invalid_argument("bite threshold must be positive");
  if (!(timeout > 0.0)) throw std::invalid_argument("bite timeout must be positive");
  if (debounce_ticks < 1) throw std::invalid_argument("debounce must be at least one tick");
}

BiteUpdate detect_bite(const BiteDetector& det, const controller::Wrench& f_m, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  BiteDetector next = det;
  const double f_y = det.axis.dot(f_m.force);
  next.above_count = std::abs(f_y) > det.threshold ? det.above_count + 1 : 0;
  if (next.above_count >= det.debounce_ticks) return {BiteResult::Bitten, next};
  next.elapsed += dt;
  if (next.elapsed >= det.timeout - kTimeEps) return {BiteResult::TimedOut, next};
  return {BiteResult::Waiting, next};
}

Pose phase_setpoint(const TrajectoryPlan& plan, TransferPhase phase, double tau) {
  if (phase == TransferPhase::BiteWait) {
    const Segment& entry = plan.segment(SegmentKind::LinearEntry);
    return plan.waypoints()[entry.last].pose;
  }
  const Segment& seg = plan.segment(segment_for(phase));
  return plan.sample(seg, plan.segment_start(seg) + tau);
}

StepResult step(const FsmContext& ctx, const TrajectoryPlan& plan, const Sensors& sensors) {
  StepResult out{ctx, Pose(), {}};
  FsmContext& c = out.context;
  const double t = sensors.clock;
  const double f_y = c.detector.axis.dot(sensors.f_m.force);
  auto transition = [&](TransferPhase to, const char* name) {
    out.events.push_back({t, c.phase, to, name, f_y});
    c.phase = to;
  };
  auto finish = [&](const Pose& setpoint) {
    out.setpoint = setpoint;
    c.last_setpoint = setpoint;
    c.has_setpoint = true;
    return out;
  };
  const Pose& start_pose = plan.waypoints().front().pose;

  if (c.phase == TransferPhase::Done || c.phase == TransferPhase::Aborted) {
    return finish(c.has_setpoint ? c.last_setpoint : start_pose);
  }
  if (sensors.safety_abort) {
    transition(TransferPhase::Aborted, "safety_stop");
    return finish(c.has_setpoint ? c.last_setpoint : start_pose);
  }
  if (c.phase == TransferPhase::Scan) transition(TransferPhase::FaceDetect, "scan_complete");
  if (c.phase == TransferPhase::FaceDetect) {
    transition(TransferPhase::ApproachArc, "face_detected");
    c.phase_start = t;
  }

  if (c.phase == TransferPhase::BiteWait) {
    const Pose hold = phase_setpoint(plan, TransferPhase::BiteWait, 0.0);
    if (t - c.phase_start <= kTimeEps) return finish(hold);
    const BiteUpdate u = detect_bite(c.detector, sensors.f_m, sensors.dt);
    c.detector = u.detector;
    if (u.result == BiteResult::Waiting) return finish(hold);
    transition(TransferPhase::Exit, u.result == BiteResult::Bitten ? "bite" : "timeout");
    c.phase_start = t;
    return finish(phase_setpoint(plan, TransferPhase::Exit, 0.0));
  }

  const Segment& seg = plan.segment(segment_for(c.phase));
  const double duration = plan.segment_duration(seg);
  const double tau = t - c.phase_start;
  if (tau >= duration - kTimeEps) {
    const Pose end = plan.waypoints()[seg.last].pose;
    const TransferPhase next = next_motion_phase(c.phase);
    transition(next, completion_event(c.phase));
    c.phase_start += duration;
    if (next == TransferPhase::BiteWait) {
      c.detector.elapsed = 0.0;
      c.detector.above_count = 0;
    }
    return finish(end);
  }
  return finish(plan.sample(seg, plan.segment_start(seg) + tau));
}

}  // namespace bite::fsm
