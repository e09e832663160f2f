#pragma once

#include "bite/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bite::kinematics {

using JacobianMatrix = Eigen::Matrix<double, 6, Eigen::Dynamic>;

inline constexpr std::size_t kArmDof = 7;
inline constexpr std::size_t kWristDof = 2;

struct JointLimits {
  double min = 0.0;
  double max = 0.0;
};

/// One revolute joint: a fixed offset from the previous frame, then a
/// rotation of q about `axis` (expressed in the offset frame).
struct JointSpec {
  std::string name;
  Pose fixed_offset;
  Vector3 axis = Vector3::UnitZ();
  JointLimits limits;
};

/// Joint angles (radians) together with the limits of the owning chain.
class JointConfig {
 public:
  JointConfig() = default;
  JointConfig(Eigen::VectorXd angles, std::vector<JointLimits> limits);

  std::size_t size() const { return static_cast<std::size_t>(angles_.size()); }
  const Eigen::VectorXd& angles() const { return angles_; }
  const std::vector<JointLimits>& limits() const { return limits_; }
  double operator[](std::size_t i) const { return angles_[static_cast<Eigen::Index>(i)]; }

  bool within_limits(double tolerance = 0.0) const;
  JointConfig with_angles(Eigen::VectorXd angles) const { return {std::move(angles), limits_}; }
  JointConfig clamped() const;

 private:
  Eigen::VectorXd angles_;
  std::vector<JointLimits> limits_;
};

/// Serial chain: base -> joint_1 ... joint_N -> tool tip (fork tip).
class ChainModel {
 public:
  /// Robot chain: requires 7 joints, or 9 when has_wrist is set.
  ChainModel(std::string name, Pose base, std::vector<JointSpec> joints, Pose tool_tip,
             bool has_wrist);

  /// Chain of any length (fixtures, planar test arms); has_wrist is false.
  static ChainModel generic(std::string name, Pose base, std::vector<JointSpec> joints,
                            Pose tool_tip);

  const std::string& name() const { return name_; }
  const Pose& base() const { return base_; }
  const std::vector<JointSpec>& joints() const { return joints_; }
  bool is_generic() const { return generic_; }
  const Pose& tool_tip() const { return tool_tip_; }
  bool has_wrist() const { return has_wrist_; }
  std::size_t dof() const { return joints_.size(); }
  std::vector<JointLimits> limits() const;

  JointConfig zero_config() const;
  JointConfig make_config(const Eigen::VectorXd& angles) const;

  /// Copy of this chain with joint `index` locked at [value, value].
  ChainModel with_locked_joint(std::size_t index, double value) const;

 private:
  struct GenericTag {};
  ChainModel(GenericTag, std::string name, Pose base, std::vector<JointSpec> joints,
             Pose tool_tip);
  void validate_joints();

  std::string name_;
  Pose base_;
  std::vector<JointSpec> joints_;
  Pose tool_tip_;
  bool has_wrist_;
  bool generic_ = false;
};

/// Loads a chain definition file (JSON, meters/radians).
ChainModel load_chain(const std::filesystem::path& path);
ChainModel parse_chain(const std::string& json_text);
std::string chain_to_json(const ChainModel& chain);

/// World pose of every joint frame (after its rotation), followed by the tool tip.
std::vector<Pose> link_frames(const ChainModel& chain, const JointConfig& q);

/// World positions of each joint origin plus the tool tip (N + 1 points).
std::vector<Vector3> link_points(const ChainModel& chain, const JointConfig& q);

Pose forward_kinematics(const ChainModel& chain, const JointConfig& q);

JacobianMatrix jacobian(const ChainModel& chain, const JointConfig& q);

/// Transform from the 7-DOF tool tip to the wrist chain's tool tip at wrist
/// zero: FK_wrist(q, 0, 0) = FK_arm(q) * wrist_offset.
Pose wrist_offset(const ChainModel& with_wrist, const ChainModel& without_wrist);

struct IkParams {
  double damping = 0.05;
  double pos_tol = 1e-3;
  double rot_tol = 1e-2;
  int max_iter = 200;
  /// Task-space error is scaled down to at most these magnitudes per
  /// iteration; <= 0 disables the clamp.
  double max_linear_step = 0.1;
  double max_angular_step = 0.5;
};

struct IkResult {
  JointConfig q;
  bool converged = false;
  int iterations = 0;
  Vector6 residual = Vector6::Zero();
};

/// Damped least squares: dq = J^T (J J^T + damping^2 I)^-1 e, with each
/// iterate clamped to the joint limits. Non-convergence is reported through
/// `converged`, carrying the best iterate seen.
IkResult ik_damped_least_squares(const ChainModel& chain, const Pose& target,
                                 const JointConfig& seed, const IkParams& params = {});

struct JointDisplacement {
  std::vector<double> per_joint;
  double mean = 0.0;
};

JointDisplacement joint_displacement(const JointConfig& a, const JointConfig& b,
                                     std::span<const std::size_t> subset);

/// Indices 0..6: the arm joints compared in the wrist study.
std::vector<std::size_t> arm_joint_indices();

}  // namespace bite::kinematics
