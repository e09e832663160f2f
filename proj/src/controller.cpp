#include "bite/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bite::controller {

namespace {

Vector6 force_gains(double value) {
  Vector6 v = Vector6::Zero();
  v.head<3>().setConstant(value);
  return v;
}

void require_non_negative(const Vector6& v, const char* what) {
  if (!v.allFinite() || (v.array() < 0.0).any()) {
    throw std::invalid_argument(std::string(what) + " must be finite and non-negative");
  }
}

Matrix3 weighted(const Matrix3& frame, const Vector3& k) {
  return frame * k.asDiagonal() * frame.transpose();
}

}  // namespace

Vector6 Wrench::to_vector() const {
  Vector6 v;
  v << force, torque;
  return v;
}

Matrix3 ReactivityGains::force_kp() const { return weighted(frame, k_p.head<3>()); }
Matrix3 ReactivityGains::force_ki() const { return weighted(frame, k_i.head<3>()); }

void ReactivityGains::validate() const {
  require_non_negative(k_p, "k_P");
  require_non_negative(k_i, "k_I");
  if (!frame.allFinite() ||
      (frame.transpose() * frame - Matrix3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("gain frame must be orthonormal");
  }
}

PhasedGains PhasedGains::ours() {
  PhasedGains g;
  g.entry_kp = force_gains(7.0);
  g.entry_ki = force_gains(20.0);
  g.exit_kp = g.entry_kp;
  g.exit_ki = g.entry_ki;
  g.exit_kp[2] = 2.0;
  g.exit_ki[2] = 1.0;
  return g;
}

PhasedGains PhasedGains::less_reactive() {
  return {force_gains(2.0), force_gains(2.0), force_gains(2.0), force_gains(2.0)};
}

PhasedGains PhasedGains::more_reactive() {
  return {force_gains(10.0), force_gains(30.0), force_gains(10.0), force_gains(30.0)};
}

PhasedGains PhasedGains::preset(const std::string& name) {
  std::string key = name;
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "ours" || key == "phased") return ours();
  if (key == "less_reactive") return less_reactive();
  if (key == "more_reactive") return more_reactive();
  throw std::invalid_argument("unknown gain preset: " + name);
}

ImpedanceParams ImpedanceParams::critically_damped(double k_linear, double k_angular, double mass,
                                                   double inertia) {
  ImpedanceParams p;
  p.stiffness << Vector3::Constant(k_linear), Vector3::Constant(k_angular);
  p.damping << Vector3::Constant(2.0 * std::sqrt(k_linear * mass)),
      Vector3::Constant(2.0 * std::sqrt(k_angular * inertia));
  return p;
}

void ImpedanceParams::validate() const {
  require_non_negative(stiffness, "stiffness");
  require_non_negative(damping, "damping");
  for (int i = 0; i < 6; ++i) {
    if (stiffness[i] > 0.0 && damping[i] <= 0.0) {
      throw std::invalid_argument("damping must be positive on stiff axes");
    }
  }
}

Wrench desired_wrench(const ImpedanceParams& params, const Vector6& pose_error,
                      const Vector6& velocity_error) {
  if (!pose_error.allFinite() || !velocity_error.allFinite()) {
    throw std::invalid_argument("non-finite tracking error");
  }
  return Wrench::from_vector(params.stiffness.cwiseProduct(pose_error) +
                             params.damping.cwiseProduct(velocity_error));
}

std::pair<Wrench, ControllerState> reactive_term(const ControllerState& state, const Wrench& f_m,
                                                 double dt) {
  if (!f_m.finite()) throw SensorFault("non-finite force measurement");
  if (std::abs(dt - state.tick_period) > 1e-12) {
    throw std::invalid_argument("dt must equal the tick period");
  }
  ControllerState next = state;

  Wrench input = f_m;
  if (state.lowpass_cutoff_hz > 0.0) {
    const double tau = 1.0 / (2.0 * std::numbers::pi * state.lowpass_cutoff_hz);
    const double alpha = dt / (dt + tau);
    next.filtered = state.filtered + (f_m - state.filtered) * alpha;
    input = next.filtered;
  }

  const ReactivityGains& g = state.active_gains;
  const Matrix3& r = g.frame;
  next.integral += input.to_vector() * dt;

  // Bound the integral authority, evaluated along the gain axes.
  if (state.windup_limit > 0.0) {
    for (int block = 0; block < 2; ++block) {
      Vector3 local = r.transpose() * next.integral.segment<3>(3 * block);
      for (int i = 0; i < 3; ++i) {
        const double ki = g.k_i[3 * block + i];
        if (ki > 0.0) {
          const double cap = state.windup_limit / ki;
          local[i] = std::clamp(local[i], -cap, cap);
        }
      }
      next.integral.segment<3>(3 * block) = r * local;
    }
  }

  Wrench out;
  out.force = weighted(r, g.k_p.head<3>()) * input.force +
              weighted(r, g.k_i.head<3>()) * next.integral.head<3>();
  out.torque = weighted(r, g.k_p.tail<3>()) * input.torque +
               weighted(r, g.k_i.tail<3>()) * next.integral.tail<3>();
  return {out, next};
}

Eigen::VectorXd joint_torques(const Eigen::MatrixXd& jac, const Wrench& f, const Wrench& f_bar) {
  if (jac.rows() != 6) throw DimensionError("jacobian must have 6 rows");
  return jac.transpose() * (f - f_bar).to_vector();
}

Eigen::VectorXd commanded_torques(const ControllerState& state, const Eigen::MatrixXd& jac,
                                  const Wrench& f, const Wrench& f_bar) {
  if (state.aborted) {
    if (jac.rows() != 6) throw DimensionError("jacobian must have 6 rows");
    return Eigen::VectorXd::Zero(jac.cols());
  }
  return joint_torques(jac, f, f_bar);
}

Matrix3 frame_with_z(const Vector3& axis) {
  const Quaternion q = Quaternion::FromTwoVectors(Vector3::UnitZ(), axis);
  return q.toRotationMatrix();
}

ReactivityGains phase_gains_in_frame(TransferPhase phase, const Matrix3& frame,
                                     const PhasedGains& gains) {
  ReactivityGains out;
  out.frame = frame;
  if (is_exit_side(phase)) {
    out.k_p = gains.exit_kp;
    out.k_i = gains.exit_ki;
  } else {
    out.k_p = gains.entry_kp;
    out.k_i = gains.entry_ki;
  }
  out.validate();
  return out;
}

ReactivityGains phase_gains(TransferPhase phase, const Vector3& exit_axis,
                            const PhasedGains& gains) {
  if (!exit_axis.allFinite() || std::abs(exit_axis.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("exit axis must be a unit vector");
  }
  for (int k = 0; k < 3; ++k) {
    if (std::abs(std::abs(exit_axis[k]) - 1.0) > 1e-12) continue;
    // Axis-aligned: move the local z gain onto world component k.
    const ReactivityGains local = phase_gains_in_frame(phase, Matrix3::Identity(), gains);
    ReactivityGains out = local;
    const int a = (k + 1) % 3;
    const int b = (k + 2) % 3;
    for (int block = 0; block < 6; block += 3) {
      out.k_p[block + a] = local.k_p[block + 0];
      out.k_p[block + b] = local.k_p[block + 1];
      out.k_p[block + k] = local.k_p[block + 2];
      out.k_i[block + a] = local.k_i[block + 0];
      out.k_i[block + b] = local.k_i[block + 1];
      out.k_i[block + k] = local.k_i[block + 2];
    }
    return out;
  }
  return phase_gains_in_frame(phase, frame_with_z(exit_axis), gains);
}

ControllerState enter_phase(const ControllerState& state, TransferPhase phase,
                            const ReactivityGains& gains) {
  ControllerState next = state;
  const bool exit_side = is_exit_side(phase);
  if (exit_side && !state.exit_side) next.integral.setZero();
  next.exit_side = exit_side;
  next.active_gains = gains;
  return next;
}

SafetyStatus safety_check(const Wrench& f_m, double limit, SafetyRule rule) {
  if (!(limit > 0.0)) throw std::invalid_argument("safety limit must be positive");
  if (!f_m.finite()) return SafetyStatus::Abort;
  const double measure =
      rule == SafetyRule::Norm ? f_m.force.norm() : f_m.force.cwiseAbs().maxCoeff();
  return measure > limit ? SafetyStatus::Abort : SafetyStatus::Ok;
}

ControllerState latch(const ControllerState& state, SafetyStatus status) {
  ControllerState next = state;
  if (status == SafetyStatus::Abort) next.aborted = true;
  return next;
}

}  // namespace bite::controller
