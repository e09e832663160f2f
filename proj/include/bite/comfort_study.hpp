#pragma once

#include "bite/geometry.hpp"
#include "bite/kinematics.hpp"
#include "bite/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bite::study {

/// Raised when too few samples converge for the statistics to mean anything.
class StudyInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform box over translations and rotations, both about the axes of
/// `frame` (the mouth frame), applied to `center`.
struct PoseDistribution {
  Pose center;
  Matrix3 frame = Matrix3::Identity();
  Vector3 trans_lo = Vector3::Constant(-0.10);
  Vector3 trans_hi = Vector3::Constant(0.10);
  Vector3 rot_lo = Vector3::Constant(-0.5235987755982988);
  Vector3 rot_hi = Vector3::Constant(0.5235987755982988);
  std::size_t count = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// (tx, ty, tz, rx, ry, rz): translation and sequential x-y-z rotation
/// angles about the distribution frame.
using PoseParams = Eigen::Matrix<double, 6, 1>;

Pose pose_from_params(const PoseDistribution& dist, const PoseParams& params);
std::vector<PoseParams> sample_pose_params(const PoseDistribution& dist);
std::vector<Pose> sample_fork_poses(const PoseDistribution& dist);

/// Personal-space cone with its apex at the head, opening toward the robot.
struct ComfortParams {
  Vector3 head_position = Vector3::Zero();
  Vector3 axis = Vector3::UnitX();
  double half_angle = 0.5;
  double length = 0.8;
  std::vector<double> arm_weights = std::vector<double>(7, 1.0);
  double wrist_weight = 1.0;
  double tool_weight = 1.0;

  void validate() const;
  /// Weight of link point i of a chain with `points` link points.
  double weight(std::size_t i, std::size_t points, bool has_wrist) const;
};

/// Radial depth of p inside the cone (0 outside, behind the apex, or past
/// the cone length).
double cone_penetration(const Vector3& p, const ComfortParams& params);

double comfort_cost(const kinematics::ChainModel& chain, const kinematics::JointConfig& q,
                    const ComfortParams& params);

struct SampleRecord {
  Pose pose;
  bool converged_with = false;
  bool converged_without = false;
  std::vector<double> disp_with;  // per arm joint, rad
  std::vector<double> disp_without;
  double mean_disp_with = 0.0;
  double mean_disp_without = 0.0;
  double cost_with = 0.0;
  double cost_without = 0.0;
  int iterations_with = 0;
  int iterations_without = 0;

  bool used() const { return converged_with && converged_without; }
};

struct StudyReport {
  std::size_t sample_count = 0;
  std::size_t used_count = 0;
  std::size_t converged_with = 0;
  std::size_t converged_without = 0;
  double convergence_rate = 0.0;  // used / sample_count
  std::uint64_t seed = 0;
  std::vector<double> joint_disp_with;  // mean per arm joint
  std::vector<double> joint_disp_without;
  double mean_disp_with = 0.0;
  double mean_disp_without = 0.0;
  double mean_cost_with = 0.0;
  double mean_cost_without = 0.0;
  double max_cost_with = 0.0;
  double max_cost_without = 0.0;
  stats::WilcoxonResult displacement_test;  // H1: without - with > 0
  stats::WilcoxonResult comfort_test;
  std::vector<SampleRecord> samples;
};

struct StudyOptions {
  double min_convergence_rate = 0.5;
  unsigned threads = 1;  // 0: hardware concurrency
};

/// Solves every sampled pose on both chains from the shared home seed and
/// reduces over the samples where both converged.
StudyReport run_wrist_study(const kinematics::ChainModel& chain_with,
                            const kinematics::ChainModel& chain_without,
                            const PoseDistribution& dist, const kinematics::IkParams& ik,
                            const ComfortParams& comfort, const kinematics::JointConfig& home,
                            const StudyOptions& options = {});

/// Evaluates one pose exactly as the study does.
SampleRecord evaluate_sample(const kinematics::ChainModel& chain_with,
                             const kinematics::ChainModel& chain_without, const Pose& pose,
                             const kinematics::IkParams& ik, const ComfortParams& comfort,
                             const kinematics::JointConfig& home);

std::string report_to_json(const StudyReport& report);
std::string samples_to_csv(const StudyReport& report);

/// Parsed study file: chains, distribution, IK and comfort parameters, home.
struct StudyConfig {
  kinematics::ChainModel chain_with;
  kinematics::ChainModel chain_without;
  PoseDistribution distribution;
  kinematics::IkParams ik;
  ComfortParams comfort;
  kinematics::JointConfig home;
  StudyOptions options;
};

StudyConfig load_study_config(const std::filesystem::path& path);
StudyConfig parse_study_config(const std::string& json_text, const std::filesystem::path& base_dir);

}  // namespace bite::study
