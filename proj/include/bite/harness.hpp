#pragma once

#include "bite/controller.hpp"
#include "bite/geometry.hpp"
#include "bite/human_sim.hpp"
#include "bite/kinematics.hpp"
#include "bite/perception.hpp"
#include "bite/phase.hpp"
#include "bite/transfer_fsm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bite::harness {

using controller::Wrench;

enum class Outcome { Success, BiteFailure, Drop, Imprecise, Aborted };
std::string_view to_string(Outcome outcome);
inline constexpr Outcome kAllOutcomes[] = {Outcome::Success, Outcome::BiteFailure, Outcome::Drop,
                                           Outcome::Imprecise, Outcome::Aborted};

/// InMouth: the robot enters the mouth. FixedPose: the robot stops at the
/// pre-mouth pose and the user leans in to take the bite.
enum class TransferMode { InMouth, FixedPose };
std::string_view to_string(TransferMode mode);

/// Constant force on the fork (world frame, N) over [start, end).
struct ForcePulse {
  double start = 0.0;
  double end = 0.0;
  Vector3 force = Vector3::Zero();
};

struct Scenario {
  std::string name = "trial";
  std::uint64_t seed = 0;
  std::string preset = "ours";
  TransferMode mode = TransferMode::InMouth;

  std::filesystem::path chain_file;  // empty: no joint tracking
  human::FoodPreset food;
  Pose food_pose;  // placement of the food preset relative to the fork tip
  human::MouthModel mouth;
  human::BiteScript bite;
  human::PerturbationKind perturbation = human::PerturbationKind::None;
  human::PerturbationParams perturbation_params;

  controller::PhasedGains gains = controller::PhasedGains::ours();
  controller::ImpedanceParams impedance = controller::ImpedanceParams::defaults();
  double mass = 2.0;      // kg
  double inertia = 0.02;  // kg m^2
  double safety_limit = 3.0;
  controller::SafetyRule safety_rule = controller::SafetyRule::PerComponent;
  double windup_limit = 10.0;

  fsm::PlanParams plan;
  double bite_threshold = 0.3;
  double bite_timeout = 1.5;

  perception::ScanParams scan{0.5, 0.0};
  perception::DyRule dy_rule = perception::DyRule::TopExtent;
  /// Error added to the perceived mouth center, mouth frame, m.
  Vector3 mouth_error = Vector3::Zero();

  std::vector<ForcePulse> disturbances;
  /// Per-tick recorded force on the fork (world frame); zero past its end.
  std::vector<Vector3> force_trace;

  /// Teeth-to-fork coupling once the food is bitten, N/m along the exit axis.
  double tether_stiffness = 500.0;
  /// FixedPose: how far the head leans onto the fork.
  double lean_distance = 0.018;
  double abort_hold = 0.1;
  bool joint_tracking = true;

  void validate() const;
};

/// Parses a scenario file; relative file references resolve against
/// base_dir, then the bundled config directory.
Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

struct VirtualRobotState {
  Pose pose;
  Vector6 twist = Vector6::Zero();  // world frame, linear first
  Vector6 mass = (Vector6() << 2, 2, 2, 0.02, 0.02, 0.02).finished();
  kinematics::JointConfig joints;
  bool joints_valid = false;
};

struct LogRecord {
  double t = 0.0;
  Pose pose;
  Wrench f_m;  // force the tool exerts on its surroundings
  TransferPhase phase = TransferPhase::Scan;
  Pose setpoint;
  double deviation = 0.0;  // |p - p_setpoint|, m
};

/// Everything outside the robot for one tick.
struct TickWorld {
  human::MouthModel mouth;  // true mouth, head motion applied
  Wrench external;          // non-contact forces on the fork (world)
  const fsm::TrajectoryPlan* plan = nullptr;
  controller::PhasedGains gains;
  controller::ImpedanceParams impedance;
  Vector3 exit_axis = Vector3::UnitZ();
  double safety_limit = 3.0;
  controller::SafetyRule safety_rule = controller::SafetyRule::PerComponent;
  double clock = 0.0;
  double dt = controller::kTickPeriod;
};

struct TickResult {
  VirtualRobotState state;
  controller::ControllerState ctrl;
  fsm::FsmContext fsm;
  LogRecord record;
  std::vector<fsm::Event> events;
  Wrench contact;
  Pose setpoint;
};

/// One 1 kHz tick: sensors, safety check, FSM step and phase gains,
/// impedance wrench, reactive term, admittance integration, log record.
/// `prev_setpoint` feeds the backward-difference setpoint velocity.
TickResult simulate_tick(const VirtualRobotState& state, const controller::ControllerState& ctrl,
                         const fsm::FsmContext& fsm, const TickWorld& world,
                         const std::optional<Pose>& prev_setpoint);

struct TrialReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string preset;
  TransferMode mode = TransferMode::InMouth;
  Outcome outcome = Outcome::Success;
  std::vector<fsm::Event> events;
  std::optional<double> bite_time;
  bool timed_out = false;
  bool safety_stop = false;
  std::optional<double> drop_time;
  std::optional<double> release_time;
  bool food_slipped = false;
  perception::FoodOffsets offsets;
  double peak_force = 0.0;  // max |f_m| component, N
  double peak_contact = 0.0;
  double peak_pull = 0.0;  // teeth pull on the fork during withdrawal
  double mean_deviation = 0.0;
  double max_deviation = 0.0;
  std::size_t joint_ik_failures = 0;
  double arm_joint_travel = 0.0;  // rad, summed over the seven arm joints
  bool joint_tracking = false;
  std::vector<LogRecord> log;
};

/// Scan, offsets, mouth detection, planning and the tick loop to Done or
/// Aborted, then outcome classification.
TrialReport run_trial(const Scenario& scenario);

/// Outcome from the trial facts, highest precedence first: imprecise,
/// drop, bite failure, aborted, success.
Outcome classify(bool imprecise, bool dropped, bool timed_out, bool aborted_in_wait,
                 bool slipped, bool released, bool aborted);

std::string report_to_json(const TrialReport& report);

/// Binary tick log: "BTLG", u32 version, u64 seed, u64 count, then per
/// record t, pose[7], f_m[6], phase (as f64), setpoint[7], deviation.
void write_log(const TrialReport& report, const std::filesystem::path& path);
std::vector<LogRecord> read_log(const std::filesystem::path& path, std::uint64_t* seed = nullptr);

inline constexpr const char* kTrajectoryHeader =
    "t_s,px,py,pz,qw,qx,qy,qz,fx,fy,fz,tau_x,tau_y,tau_z,phase,"
    "sp_px,sp_py,sp_pz,sp_qw,sp_qx,sp_qy,sp_qz,deviation_m";
std::string trajectory_csv(const std::vector<LogRecord>& log);
void export_trajectory(const std::vector<LogRecord>& log, const std::filesystem::path& path);

struct SuiteEntry {
  std::string method;  // aggregation key, defaults to the gain preset
  Scenario scenario;
  std::size_t repetitions = 1;
};

struct SuiteConfig {
  std::string name = "suite";
  std::uint64_t seed = 0;
  std::vector<SuiteEntry> entries;
};

/// Entries reference a scenario file plus an optional JSON merge patch.
SuiteConfig parse_suite(const std::string& json_text, const std::filesystem::path& base_dir);
SuiteConfig load_suite(const std::filesystem::path& path);

struct MethodTally {
  std::size_t trials = 0;
  std::map<Outcome, std::size_t> counts;
  double success_rate() const;
};

struct SuiteTrial {
  std::size_t index = 0;
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Success;
  bool refuse = false;
};

struct SuiteReport {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<SuiteTrial> trials;
  std::map<std::string, MethodTally> methods;
  std::size_t total = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

/// Trial i runs with seed derive_seed(suite seed, i). Trials are spread
/// over `threads` workers; results are reduced in index order.
SuiteReport run_suite(const SuiteConfig& suite, unsigned threads = 1);
std::string suite_to_json(const SuiteReport& report);
std::string suite_table_csv(const SuiteReport& report);

}  // namespace bite::harness
