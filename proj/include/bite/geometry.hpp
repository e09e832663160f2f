#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bite {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Quaternion = Eigen::Quaterniond;

/// Thrown when a caller hands in vectors or configs of the wrong size.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rigid transform: position in meters plus a unit quaternion.
///
/// Every constructor and composition renormalizes the quaternion, so the
/// norm stays within 1e-9 of one no matter how long a chain of products gets.
struct Pose {
  Vector3 position = Vector3::Zero();
  Quaternion orientation = Quaternion::Identity();

  Pose() = default;
  Pose(const Vector3& p, const Quaternion& q) : position(p), orientation(q.normalized()) {}
  explicit Pose(const Vector3& p) : position(p) {}
  explicit Pose(const Quaternion& q) : orientation(q.normalized()) {}

  static Pose identity() { return {}; }

  /// From [x, y, z, qw, qx, qy, qz].
  static Pose from_array(const std::array<double, 7>& a);
  std::array<double, 7> to_array() const;

  Matrix3 rotation() const { return orientation.toRotationMatrix(); }

  Pose operator*(const Pose& rhs) const {
    return {position + orientation * rhs.position, orientation * rhs.orientation};
  }
  Vector3 operator*(const Vector3& point) const { return position + orientation * point; }

  Pose inverse() const {
    const Quaternion inv = orientation.conjugate();
    return {-(inv * position), inv};
  }
};

/// Flips q to the hemisphere with a non-negative scalar part.
Quaternion canonical(const Quaternion& q);

/// Geodesic angle between two orientations, in [0, pi].
double quaternion_distance(const Quaternion& a, const Quaternion& b);

/// Rotation vector (axis * angle) of a rotation matrix / quaternion.
Vector3 log_map(const Quaternion& q);
Quaternion exp_map(const Vector3& rotation_vector);

/// 6-vector error [p_target - p; log(R_target R^T)] in the world frame.
Vector6 pose_error(const Pose& target, const Pose& current);

Quaternion axis_angle(const Vector3& axis, double angle);

/// Rotation whose columns are (x, y, z); columns must be orthonormal.
Quaternion from_axes(const Vector3& x, const Vector3& y, const Vector3& z);

Pose slerp(const Pose& a, const Pose& b, double s);

inline bool all_finite(const Vector3& v) { return v.allFinite(); }

/// Counter-based RNG: splitmix64 for seeding, xoshiro256** for the stream.
/// Uniform doubles use the top 53 bits so traces are identical across
/// compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derive an independent stream seed from (base, counter).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter);

}  // namespace bite
