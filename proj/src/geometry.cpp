#include "bite/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bite {

Pose Pose::from_array(const std::array<double, 7>& a) {
  return {Vector3(a[0], a[1], a[2]), Quaternion(a[3], a[4], a[5], a[6])};
}

std::array<double, 7> Pose::to_array() const {
  return {position.x(),      position.y(),      position.z(),     orientation.w(),
          orientation.x(),   orientation.y(),   orientation.z()};
}

Quaternion canonical(const Quaternion& q) {
  if (q.w() < 0.0) return Quaternion(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

double quaternion_distance(const Quaternion& a, const Quaternion& b) {
  const Quaternion rel = canonical((a.conjugate() * b).normalized());
  return 2.0 * std::atan2(rel.vec().norm(), rel.w());
}

Vector3 log_map(const Quaternion& q_in) {
  const Quaternion q = canonical(q_in.normalized());
  const double s = q.vec().norm();
  if (s < 1e-12) {
    // First-order expansion; angle/sin(angle/2) -> 2.
    return 2.0 * q.vec();
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return q.vec() * (angle / s);
}

Quaternion exp_map(const Vector3& r) {
  const double angle = r.norm();
  if (angle < 1e-12) {
    Quaternion q(1.0, 0.5 * r.x(), 0.5 * r.y(), 0.5 * r.z());
    return q.normalized();
  }
  return Quaternion(Eigen::AngleAxisd(angle, r / angle));
}

Vector6 pose_error(const Pose& target, const Pose& current) {
  Vector6 e;
  e.head<3>() = target.position - current.position;
  e.tail<3>() = log_map(target.orientation * current.orientation.conjugate());
  return e;
}

Quaternion axis_angle(const Vector3& axis, double angle) {
  return Quaternion(Eigen::AngleAxisd(angle, axis.normalized()));
}

Quaternion from_axes(const Vector3& x, const Vector3& y, const Vector3& z) {
  Matrix3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = z;
  return Quaternion(m).normalized();
}

Pose slerp(const Pose& a, const Pose& b, double s) {
  Quaternion qb = b.orientation;
  if (a.orientation.dot(qb) < 0.0) qb.coeffs() *= -1.0;
  return {a.position + s * (b.position - a.position), a.orientation.slerp(s, qb)};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  return splitmix64(splitmix64(base) ^ (counter * 0xD1B54A32D192ED03ULL + 1));
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    x = splitmix64(x);
    word = x;
  }
}

std::uint64_t Rng::next_u64() {
  auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bite
