#include "bite/kinematics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace bite::kinematics {

using nlohmann::json;

JointConfig::JointConfig(Eigen::VectorXd angles, std::vector<JointLimits> limits)
    : angles_(std::move(angles)), limits_(std::move(limits)) {
  if (static_cast<std::size_t>(angles_.size()) != limits_.size()) {
    throw DimensionError("JointConfig: " + std::to_string(angles_.size()) + " angles but " +
                         std::to_string(limits_.size()) + " limits");
  }
}

bool JointConfig::within_limits(double tolerance) const {
  for (std::size_t i = 0; i < size(); ++i) {
    const double a = (*this)[i];
    if (a < limits_[i].min - tolerance || a > limits_[i].max + tolerance) return false;
  }
  return true;
}

JointConfig JointConfig::clamped() const {
  Eigen::VectorXd out = angles_;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    out[idx] = std::clamp(out[idx], limits_[i].min, limits_[i].max);
  }
  return {std::move(out), limits_};
}

ChainModel::ChainModel(std::string name, Pose base, std::vector<JointSpec> joints, Pose tool_tip,
                       bool has_wrist)
    : name_(std::move(name)),
      base_(base),
      joints_(std::move(joints)),
      tool_tip_(tool_tip),
      has_wrist_(has_wrist) {
  const std::size_t expected = has_wrist_ ? kArmDof + kWristDof : kArmDof;
  if (joints_.size() != expected) {
    throw DimensionError("chain '" + name_ + "': has_wrist=" + (has_wrist_ ? "true" : "false") +
                         " requires " + std::to_string(expected) + " joints, got " +
                         std::to_string(joints_.size()));
  }
  validate_joints();
}

ChainModel::ChainModel(GenericTag, std::string name, Pose base, std::vector<JointSpec> joints,
                       Pose tool_tip)
    : name_(std::move(name)),
      base_(base),
      joints_(std::move(joints)),
      tool_tip_(tool_tip),
      has_wrist_(false),
      generic_(true) {
  if (joints_.empty()) throw DimensionError("chain '" + name_ + "' has no joints");
  validate_joints();
}

ChainModel ChainModel::generic(std::string name, Pose base, std::vector<JointSpec> joints,
                               Pose tool_tip) {
  return {GenericTag{}, std::move(name), base, std::move(joints), tool_tip};
}

void ChainModel::validate_joints() {
  for (auto& j : joints_) {
    if (j.axis.norm() < 1e-12) throw std::invalid_argument("joint '" + j.name + "': zero axis");
    j.axis.normalize();
    if (j.limits.min > j.limits.max) {
      throw std::invalid_argument("joint '" + j.name + "': min limit above max");
    }
  }
}

std::vector<JointLimits> ChainModel::limits() const {
  std::vector<JointLimits> out;
  out.reserve(joints_.size());
  for (const auto& j : joints_) out.push_back(j.limits);
  return out;
}

JointConfig ChainModel::zero_config() const {
  return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof())), limits()};
}

JointConfig ChainModel::make_config(const Eigen::VectorXd& angles) const {
  if (static_cast<std::size_t>(angles.size()) != dof()) {
    throw DimensionError("chain '" + name_ + "' has " + std::to_string(dof()) +
                         " joints, config has " + std::to_string(angles.size()));
  }
  return {angles, limits()};
}

ChainModel ChainModel::with_locked_joint(std::size_t index, double value) const {
  auto joints = joints_;
  joints.at(index).limits = {value, value};
  if (generic_) return generic(name_, base_, std::move(joints), tool_tip_);
  return {name_, base_, std::move(joints), tool_tip_, has_wrist_};
}

namespace {

Pose pose_from_json(const json& j) {
  const auto a = j.get<std::vector<double>>();
  if (a.size() != 7) throw std::invalid_argument("pose arrays need [x,y,z,qw,qx,qy,qz]");
  return Pose::from_array({a[0], a[1], a[2], a[3], a[4], a[5], a[6]});
}

json pose_to_json(const Pose& p) {
  const auto a = p.to_array();
  return json(std::vector<double>(a.begin(), a.end()));
}

void check_dof(const ChainModel& chain, const JointConfig& q) {
  if (q.size() != chain.dof()) {
    throw DimensionError("chain '" + chain.name() + "' expects " + std::to_string(chain.dof()) +
                         " joint values, got " + std::to_string(q.size()));
  }
}

}  // namespace

ChainModel parse_chain(const std::string& text) {
  const json doc = json::parse(text);
  std::vector<JointSpec> joints;
  for (const auto& jj : doc.at("joints")) {
    JointSpec spec;
    spec.name = jj.value("name", "joint" + std::to_string(joints.size() + 1));
    spec.fixed_offset = pose_from_json(jj.at("fixed_offset"));
    const auto axis = jj.at("axis").get<std::vector<double>>();
    if (axis.size() != 3) throw std::invalid_argument("joint axis needs 3 components");
    spec.axis = Vector3(axis[0], axis[1], axis[2]);
    const auto lim = jj.at("limits").get<std::vector<double>>();
    if (lim.size() != 2) throw std::invalid_argument("joint limits need [min, max]");
    spec.limits = {lim[0], lim[1]};
    joints.push_back(std::move(spec));
  }
  const Pose base = doc.contains("base") ? pose_from_json(doc["base"]) : Pose::identity();
  if (doc.value("generic", false)) {
    return ChainModel::generic(doc.value("name", std::string("chain")), base, std::move(joints),
                               pose_from_json(doc.at("tool_tip")));
  }
  return {doc.value("name", std::string("chain")), base, std::move(joints),
          pose_from_json(doc.at("tool_tip")), doc.value("has_wrist", false)};
}

ChainModel load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chain(ss.str());
}

std::string chain_to_json(const ChainModel& chain) {
  json doc;
  doc["name"] = chain.name();
  doc["has_wrist"] = chain.has_wrist();
  doc["base"] = pose_to_json(chain.base());
  doc["tool_tip"] = pose_to_json(chain.tool_tip());
  doc["joints"] = json::array();
  for (const auto& j : chain.joints()) {
    doc["joints"].push_back({{"name", j.name},
                             {"fixed_offset", pose_to_json(j.fixed_offset)},
                             {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                             {"limits", {j.limits.min, j.limits.max}}});
  }
  return doc.dump(2);
}

std::vector<Pose> link_frames(const ChainModel& chain, const JointConfig& q) {
  check_dof(chain, q);
  std::vector<Pose> frames;
  frames.reserve(chain.dof() + 1);
  Pose t = chain.base();
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joints()[i];
    t = t * j.fixed_offset;
    t = t * Pose(axis_angle(j.axis, q[i]));
    frames.push_back(t);
  }
  frames.push_back(t * chain.tool_tip());
  return frames;
}

std::vector<Vector3> link_points(const ChainModel& chain, const JointConfig& q) {
  const auto frames = link_frames(chain, q);
  std::vector<Vector3> points;
  points.reserve(frames.size());
  for (const auto& f : frames) points.push_back(f.position);
  return points;
}

Pose forward_kinematics(const ChainModel& chain, const JointConfig& q) {
  return link_frames(chain, q).back();
}

JacobianMatrix jacobian(const ChainModel& chain, const JointConfig& q) {
  const auto frames = link_frames(chain, q);
  const Vector3 tip = frames.back().position;
  JacobianMatrix jac(6, static_cast<Eigen::Index>(chain.dof()));
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    // Rotation about the local axis leaves the joint origin and the axis fixed,
    // so the post-rotation frame carries the same world axis.
    const Vector3 z = frames[i].orientation * chain.joints()[i].axis;
    const auto col = static_cast<Eigen::Index>(i);
    jac.block<3, 1>(0, col) = z.cross(tip - frames[i].position);
    jac.block<3, 1>(3, col) = z;
  }
  return jac;
}

Pose wrist_offset(const ChainModel& with_wrist, const ChainModel& without_wrist) {
  if (!with_wrist.has_wrist() || without_wrist.has_wrist()) {
    throw std::invalid_argument("wrist_offset needs (wrist chain, arm-only chain)");
  }
  Pose wrist = Pose::identity();
  for (std::size_t i = kArmDof; i < with_wrist.dof(); ++i) {
    wrist = wrist * with_wrist.joints()[i].fixed_offset;
  }
  return without_wrist.tool_tip().inverse() * wrist * with_wrist.tool_tip();
}

IkResult ik_damped_least_squares(const ChainModel& chain, const Pose& target,
                                 const JointConfig& seed, const IkParams& params) {
  check_dof(chain, seed);
  if (!(params.damping > 0.0) || !(params.pos_tol > 0.0) || !(params.rot_tol > 0.0)) {
    throw std::invalid_argument("ik: damping and tolerances must be positive");
  }
  const double lambda_sq = params.damping * params.damping;

  auto error_of = [&](const JointConfig& q) {
    return pose_error(target, forward_kinematics(chain, q));
  };
  auto converged = [&](const Vector6& e) {
    return e.head<3>().norm() < params.pos_tol && e.tail<3>().norm() < params.rot_tol;
  };
  // Scalar used only to rank non-converged iterates.
  auto score = [&](const Vector6& e) {
    return e.head<3>().norm() / params.pos_tol + e.tail<3>().norm() / params.rot_tol;
  };

  JointConfig q = seed;
  Vector6 e = error_of(q);
  IkResult best{q, false, 0, e};
  double best_score = score(e);
  if (converged(e)) {
    best.converged = true;
    return best;
  }

  for (int it = 1; it <= params.max_iter; ++it) {
    Vector6 step = e;
    if (params.max_linear_step > 0.0) {
      const double n = step.head<3>().norm();
      if (n > params.max_linear_step) step.head<3>() *= params.max_linear_step / n;
    }
    if (params.max_angular_step > 0.0) {
      const double n = step.tail<3>().norm();
      if (n > params.max_angular_step) step.tail<3>() *= params.max_angular_step / n;
    }
    const JacobianMatrix jac = jacobian(chain, q);
    Eigen::Matrix<double, 6, 6> jjt = jac * jac.transpose();
    jjt.diagonal().array() += lambda_sq;
    const Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(step);
    q = q.with_angles(q.angles() + dq).clamped();
    e = error_of(q);
    if (!e.allFinite()) break;

    const double s = score(e);
    if (s < best_score) {
      best_score = s;
      best = {q, false, it, e};
    }
    if (converged(e)) return {q, true, it, e};
  }
  best.iterations = params.max_iter;
  return best;
}

JointDisplacement joint_displacement(const JointConfig& a, const JointConfig& b,
                                     std::span<const std::size_t> subset) {
  if (a.size() != b.size()) {
    throw DimensionError("joint_displacement: configs of length " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  JointDisplacement out;
  out.per_joint.reserve(subset.size());
  for (const std::size_t i : subset) {
    if (i >= a.size()) throw DimensionError("joint_displacement: index out of range");
    out.per_joint.push_back(std::abs(a[i] - b[i]));
  }
  if (!out.per_joint.empty()) {
    out.mean = std::accumulate(out.per_joint.begin(), out.per_joint.end(), 0.0) /
               static_cast<double>(out.per_joint.size());
  }
  return out;
}

std::vector<std::size_t> arm_joint_indices() {
  std::vector<std::size_t> idx(kArmDof);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace bite::kinematics
