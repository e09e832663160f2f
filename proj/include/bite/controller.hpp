#pragma once

#include "bite/geometry.hpp"
#include "bite/phase.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>

namespace bite::controller {

inline constexpr double kTickPeriod = 0.001;

/// Raised when a measurement contains NaN or infinity.
class SensorFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Wrench {
  Vector3 force = Vector3::Zero();
  Vector3 torque = Vector3::Zero();

  static Wrench zero() { return {}; }
  static Wrench from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vector6 to_vector() const;
  bool finite() const { return force.allFinite() && torque.allFinite(); }

  Wrench operator+(const Wrench& o) const { return {force + o.force, torque + o.torque}; }
  Wrench operator-(const Wrench& o) const { return {force - o.force, torque - o.torque}; }
  Wrench operator-() const { return {-force, -torque}; }
  Wrench operator*(double s) const { return {force * s, torque * s}; }
};

/// Per-axis PI gains. Entries are expressed along the columns of `frame`
/// (world-frame unit axes); with frame = I they act on world components.
struct ReactivityGains {
  Vector6 k_p = Vector6::Zero();
  Vector6 k_i = Vector6::Zero();  // Hz
  Matrix3 frame = Matrix3::Identity();

  /// 3x3 world-frame gain matrices: frame * diag(k) * frame^T.
  Matrix3 force_kp() const;
  Matrix3 force_ki() const;
  void validate() const;
};

/// Gains for both sides of the transfer, written in the exit frame
/// (local z = exit axis).
struct PhasedGains {
  Vector6 entry_kp;
  Vector6 entry_ki;
  Vector6 exit_kp;
  Vector6 exit_ki;

  static PhasedGains ours();
  static PhasedGains less_reactive();
  static PhasedGains more_reactive();
  /// "ours", "less_reactive", "more_reactive" (also "less-reactive" etc).
  static PhasedGains preset(const std::string& name);
};

struct ImpedanceParams {
  Vector6 stiffness = Vector6::Zero();
  Vector6 damping = Vector6::Zero();

  /// D = 2 sqrt(K m) per axis.
  static ImpedanceParams critically_damped(double k_linear, double k_angular, double mass,
                                           double inertia);
  static ImpedanceParams defaults() { return critically_damped(200.0, 10.0, 2.0, 0.02); }
  void validate() const;
};

enum class SafetyRule { PerComponent, Norm };
enum class SafetyStatus { Ok, Abort };

struct ControllerState {
  Vector6 integral = Vector6::Zero();  // world frame, N s and N m s
  ReactivityGains active_gains;
  Vector3 exit_axis = Vector3::UnitZ();
  double tick_period = kTickPeriod;
  /// Per-component bound on |k_I * integral| in the gain frame; <= 0 disables.
  double windup_limit = 10.0;
  /// First-order low-pass on f_m before the PI term; 0 = off.
  double lowpass_cutoff_hz = 0.0;
  Wrench filtered;
  bool exit_side = false;
  bool aborted = false;
};

Wrench desired_wrench(const ImpedanceParams& params, const Vector6& pose_error,
                      const Vector6& velocity_error);

/// Advances the integral by f_m * dt and returns k_P f_m + k_I integral.
std::pair<Wrench, ControllerState> reactive_term(const ControllerState& state, const Wrench& f_m,
                                                 double dt);

/// tau = J^T (f - f_bar).
Eigen::VectorXd joint_torques(const Eigen::MatrixXd& jac, const Wrench& f, const Wrench& f_bar);

/// Same as joint_torques but zero once the state has latched an abort.
Eigen::VectorXd commanded_torques(const ControllerState& state, const Eigen::MatrixXd& jac,
                                  const Wrench& f, const Wrench& f_bar);

/// Gains for `phase`. Axis-aligned exit axes yield per-world-component
/// vectors (identity frame); other axes use a frame whose z column is the axis.
ReactivityGains phase_gains(TransferPhase phase, const Vector3& exit_axis,
                            const PhasedGains& gains = PhasedGains::ours());

/// Gains in an explicit frame whose third column is the exit axis.
ReactivityGains phase_gains_in_frame(TransferPhase phase, const Matrix3& frame,
                                     const PhasedGains& gains);

/// Installs the gains for `phase`; the integral resets when crossing from
/// the entry side to the exit side.
ControllerState enter_phase(const ControllerState& state, TransferPhase phase,
                            const ReactivityGains& gains);

SafetyStatus safety_check(const Wrench& f_m, double limit,
                          SafetyRule rule = SafetyRule::PerComponent);

/// Applies a check result; once aborted the state stays aborted.
ControllerState latch(const ControllerState& state, SafetyStatus status);

/// Rotation taking +z onto `axis` by the shortest arc.
Matrix3 frame_with_z(const Vector3& axis);

}  // namespace bite::controller
