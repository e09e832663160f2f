#include "bite/comfort_study.hpp"

#include "bite/io.hpp"
#include "bite/transfer_fsm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

namespace bite::study {

namespace {

using kinematics::ChainModel;
using kinematics::JointConfig;
using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

Vector3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw io::ConfigError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::pair<Vector3, Vector3> bounds(const json& j, double scale) {
  if (!j.is_array() || j.size() != 3) throw io::ConfigError("expected three [lo, hi] intervals");
  Vector3 lo, hi;
  for (int k = 0; k < 3; ++k) {
    lo[k] = j[k].at(0).get<double>() * scale;
    hi[k] = j[k].at(1).get<double>() * scale;
  }
  return {lo, hi};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& name) {
  const std::filesystem::path p(name);
  if (p.is_absolute()) return p;
  if (std::filesystem::exists(base / p)) return base / p;
  return std::filesystem::path(BITE_DEFAULT_CONFIG_DIR) / p;
}

json wilcoxon_json(const stats::WilcoxonResult& r) {
  return {{"n", r.n},           {"w_plus", r.w_plus}, {"w_minus", r.w_minus},
          {"z", r.z},           {"p_value", r.p_value}, {"exact", r.exact},
          {"alternative", "without_wrist > with_wrist"}};
}

}  // namespace

void PoseDistribution::validate() const {
  if (count == 0) throw std::invalid_argument("pose distribution needs a positive count");
  if (!trans_lo.allFinite() || !trans_hi.allFinite() || !rot_lo.allFinite() || !rot_hi.allFinite() ||
      (trans_lo.array() > trans_hi.array()).any() || (rot_lo.array() > rot_hi.array()).any()) {
    throw std::invalid_argument("pose distribution bounds must be finite with lo <= hi");
  }
}

Pose pose_from_params(const PoseDistribution& dist, const PoseParams& p) {
  const Quaternion local = axis_angle(Vector3::UnitX(), p[3]) * axis_angle(Vector3::UnitY(), p[4]) *
                           axis_angle(Vector3::UnitZ(), p[5]);
  const Quaternion frame(dist.frame);
  const Vector3 t = p.head<3>();
  return Pose(dist.center.position + dist.frame * t,
              frame * local * frame.conjugate() * dist.center.orientation);
}

std::vector<PoseParams> sample_pose_params(const PoseDistribution& dist) {
  dist.validate();
  Rng rng(dist.seed);
  std::vector<PoseParams> out;
  out.reserve(dist.count);
  for (std::size_t i = 0; i < dist.count; ++i) {
    PoseParams p;
    for (int k = 0; k < 3; ++k) p[k] = rng.uniform(dist.trans_lo[k], dist.trans_hi[k]);
    for (int k = 0; k < 3; ++k) p[3 + k] = rng.uniform(dist.rot_lo[k], dist.rot_hi[k]);
    out.push_back(p);
  }
  return out;
}

std::vector<Pose> sample_fork_poses(const PoseDistribution& dist) {
  std::vector<Pose> out;
  for (const PoseParams& p : sample_pose_params(dist)) out.push_back(pose_from_params(dist, p));
  return out;
}

void ComfortParams::validate() const {
  if (!(half_angle > 0.0 && half_angle < std::numbers::pi / 2.0)) {
    throw std::invalid_argument("cone half-angle must lie in (0, pi/2)");
  }
  if (!(length > 0.0)) throw std::invalid_argument("cone length must be positive");
  if (std::abs(axis.norm() - 1.0) > 1e-9) throw std::invalid_argument("cone axis must be unit");
  const auto negative = [](double w) { return !(w >= 0.0); };
  if (std::any_of(arm_weights.begin(), arm_weights.end(), negative) || negative(wrist_weight) ||
      negative(tool_weight)) {
    throw std::invalid_argument("comfort weights must be non-negative");
  }
}

double ComfortParams::weight(std::size_t i, std::size_t points, bool has_wrist) const {
  if (i + 1 == points) return tool_weight;
  if (has_wrist && i >= kinematics::kArmDof) return wrist_weight;
  if (i < arm_weights.size()) return arm_weights[i];
  return arm_weights.empty() ? 1.0 : arm_weights.back();
}

double cone_penetration(const Vector3& p, const ComfortParams& params) {
  const Vector3 v = p - params.head_position;
  const double depth = v.dot(params.axis);
  if (depth <= 0.0 || depth > params.length) return 0.0;
  const double radial = (v - depth * params.axis).norm();
  return std::max(0.0, depth * std::tan(params.half_angle) - radial);
}

double comfort_cost(const ChainModel& chain, const JointConfig& q, const ComfortParams& params) {
  const std::vector<Vector3> points = kinematics::link_points(chain, q);
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = params.weight(i, points.size(), chain.has_wrist());
    if (w > 0.0) cost += w * cone_penetration(points[i], params);
  }
  return cost;
}

SampleRecord evaluate_sample(const ChainModel& chain_with, const ChainModel& chain_without,
                             const Pose& pose, const kinematics::IkParams& ik,
                             const ComfortParams& comfort, const JointConfig& home) {
  // Seeds carry each chain's own limits, which the solver clamps to.
  const JointConfig home_with = chain_with.make_config(home.angles());
  const JointConfig home_without =
      chain_without.make_config(home.angles().head(static_cast<Eigen::Index>(chain_without.dof())));
  const auto arm = kinematics::arm_joint_indices();

  SampleRecord rec;
  rec.pose = pose;
  const kinematics::IkResult a = kinematics::ik_damped_least_squares(chain_with, pose, home_with, ik);
  const kinematics::IkResult b =
      kinematics::ik_damped_least_squares(chain_without, pose, home_without, ik);
  rec.converged_with = a.converged;
  rec.converged_without = b.converged;
  rec.iterations_with = a.iterations;
  rec.iterations_without = b.iterations;

  const auto da = kinematics::joint_displacement(a.q, home_with, arm);
  const auto db = kinematics::joint_displacement(b.q, home_without, arm);
  rec.disp_with = da.per_joint;
  rec.disp_without = db.per_joint;
  rec.mean_disp_with = da.mean;
  rec.mean_disp_without = db.mean;
  rec.cost_with = comfort_cost(chain_with, a.q, comfort);
  rec.cost_without = comfort_cost(chain_without, b.q, comfort);
  return rec;
}

StudyReport run_wrist_study(const ChainModel& chain_with, const ChainModel& chain_without,
                            const PoseDistribution& dist, const kinematics::IkParams& ik,
                            const ComfortParams& comfort, const JointConfig& home,
                            const StudyOptions& options) {
  comfort.validate();
  if (home.size() != chain_with.dof()) throw DimensionError("home must match the wrist chain");
  if (chain_with.dof() < kinematics::kArmDof || chain_without.dof() < kinematics::kArmDof) {
    throw DimensionError("study chains need the seven arm joints");
  }
  const std::vector<Pose> poses = sample_fork_poses(dist);

  StudyReport report;
  report.sample_count = poses.size();
  report.seed = dist.seed;
  report.samples.resize(poses.size());

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, poses.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < poses.size(); i = next++) {
      report.samples[i] = evaluate_sample(chain_with, chain_without, poses[i], ik, comfort, home);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Sequential reduction in sample order keeps the report bit-identical.
  const std::size_t arm = kinematics::kArmDof;
  report.joint_disp_with.assign(arm, 0.0);
  report.joint_disp_without.assign(arm, 0.0);
  std::vector<double> disp_diff, cost_diff;
  for (const SampleRecord& s : report.samples) {
    report.converged_with += s.converged_with;
    report.converged_without += s.converged_without;
    if (!s.used()) continue;
    ++report.used_count;
    for (std::size_t j = 0; j < arm; ++j) {
      report.joint_disp_with[j] += s.disp_with[j];
      report.joint_disp_without[j] += s.disp_without[j];
    }
    report.mean_disp_with += s.mean_disp_with;
    report.mean_disp_without += s.mean_disp_without;
    report.mean_cost_with += s.cost_with;
    report.mean_cost_without += s.cost_without;
    report.max_cost_with = std::max(report.max_cost_with, s.cost_with);
    report.max_cost_without = std::max(report.max_cost_without, s.cost_without);
    disp_diff.push_back(s.mean_disp_without - s.mean_disp_with);
    cost_diff.push_back(s.cost_without - s.cost_with);
  }
  report.convergence_rate =
      static_cast<double>(report.used_count) / static_cast<double>(report.sample_count);
  if (report.convergence_rate < options.min_convergence_rate) {
    throw StudyInvalid("only " + std::to_string(report.used_count) + " of " +
                       std::to_string(report.sample_count) + " samples converged on both chains");
  }
  const double n = static_cast<double>(report.used_count);
  for (std::size_t j = 0; j < arm; ++j) {
    report.joint_disp_with[j] /= n;
    report.joint_disp_without[j] /= n;
  }
  report.mean_disp_with /= n;
  report.mean_disp_without /= n;
  report.mean_cost_with /= n;
  report.mean_cost_without /= n;
  report.displacement_test = stats::wilcoxon_signed_rank_greater(disp_diff);
  report.comfort_test = stats::wilcoxon_signed_rank_greater(cost_diff);
  return report;
}

std::string report_to_json(const StudyReport& r) {
  json j;
  j["sample_count"] = r.sample_count;
  j["used_count"] = r.used_count;
  j["converged_with_wrist"] = r.converged_with;
  j["converged_without_wrist"] = r.converged_without;
  j["convergence_rate"] = r.convergence_rate;
  j["seed"] = r.seed;
  j["with_wrist"] = {{"joint_displacement_rad", r.joint_disp_with},
                     {"mean_joint_displacement_rad", r.mean_disp_with},
                     {"mean_comfort_cost", r.mean_cost_with},
                     {"max_comfort_cost", r.max_cost_with}};
  j["without_wrist"] = {{"joint_displacement_rad", r.joint_disp_without},
                        {"mean_joint_displacement_rad", r.mean_disp_without},
                        {"mean_comfort_cost", r.mean_cost_without},
                        {"max_comfort_cost", r.max_cost_without}};
  j["displacement_test"] = wilcoxon_json(r.displacement_test);
  j["comfort_test"] = wilcoxon_json(r.comfort_test);
  return j.dump(2) + "\n";
}

std::string samples_to_csv(const StudyReport& r) {
  std::string out =
      "index,px,py,pz,qw,qx,qy,qz,converged_with,converged_without,used,"
      "disp_with_rad,disp_without_rad,cost_with,cost_without,iter_with,iter_without\n";
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const SampleRecord& s = r.samples[i];
    out += std::to_string(i);
    for (double v : s.pose.to_array()) {
      out += ',';
      io::append_double(out, v);
    }
    out += s.converged_with ? ",1" : ",0";
    out += s.converged_without ? ",1" : ",0";
    out += s.used() ? ",1" : ",0";
    for (double v : {s.mean_disp_with, s.mean_disp_without, s.cost_with, s.cost_without}) {
      out += ',';
      io::append_double(out, v);
    }
    out += ',' + std::to_string(s.iterations_with) + ',' + std::to_string(s.iterations_without);
    out += '\n';
  }
  return out;
}

StudyConfig parse_study_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  const json j = json::parse(json_text);
  ChainModel with = kinematics::load_chain(resolve(base_dir, j.value("wrist_chain", "panda_wrist.json")));
  ChainModel without = kinematics::load_chain(resolve(base_dir, j.value("arm_chain", "panda_arm.json")));
  if (!with.has_wrist() || without.has_wrist()) {
    throw io::ConfigError("study needs one chain with the wrist and one without");
  }

  const json& m = j.at("mouth");
  const Pose mouth(vec3(m.at("position")),
                   Quaternion(m.at("orientation_wxyz").at(0).get<double>(),
                              m.at("orientation_wxyz").at(1).get<double>(),
                              m.at("orientation_wxyz").at(2).get<double>(),
                              m.at("orientation_wxyz").at(3).get<double>()));
  const double pitch = j.value("pitch_deg", 25.0) * kDeg;

  PoseDistribution dist;
  dist.center = Pose(mouth.position, fsm::transfer_orientation(mouth, pitch));
  dist.frame = mouth.rotation();
  const json& d = j.at("distribution");
  std::tie(dist.trans_lo, dist.trans_hi) = bounds(d.at("translation_m"), 1.0);
  std::tie(dist.rot_lo, dist.rot_hi) = bounds(d.at("rotation_deg"), kDeg);
  dist.count = d.value("count", std::size_t{10000});
  dist.seed = j.at("seed").get<std::uint64_t>();
  dist.validate();

  kinematics::IkParams ik;
  if (j.contains("ik")) {
    const json& k = j["ik"];
    ik.damping = k.value("damping", ik.damping);
    ik.pos_tol = k.value("pos_tol_m", ik.pos_tol);
    ik.rot_tol = k.value("rot_tol_rad", ik.rot_tol);
    ik.max_iter = k.value("max_iter", ik.max_iter);
    ik.max_linear_step = k.value("max_linear_step_m", ik.max_linear_step);
    ik.max_angular_step = k.value("max_angular_step_rad", ik.max_angular_step);
  }

  ComfortParams comfort;
  const json& c = j.at("comfort");
  const Matrix3 rm = mouth.rotation();
  comfort.axis = rm.col(2);
  comfort.head_position = mouth.position - c.value("head_offset_m", 0.1) * comfort.axis;
  comfort.half_angle = c.value("half_angle_deg", 30.0) * kDeg;
  comfort.length = c.value("length_m", 0.8);
  if (c.contains("arm_weights")) comfort.arm_weights = c["arm_weights"].get<std::vector<double>>();
  comfort.wrist_weight = c.value("wrist_weight", comfort.wrist_weight);
  comfort.tool_weight = c.value("tool_weight", comfort.tool_weight);
  comfort.validate();

  const auto home_vals = j.at("home").get<std::vector<double>>();
  if (home_vals.size() != with.dof()) throw io::ConfigError("home must list one angle per wrist-chain joint");
  const JointConfig home =
      with.make_config(Eigen::Map<const Eigen::VectorXd>(home_vals.data(), static_cast<Eigen::Index>(home_vals.size())));
  if (!home.within_limits()) throw io::ConfigError("home configuration violates joint limits");

  StudyOptions options;
  options.threads = j.value("threads", 1u);
  options.min_convergence_rate = j.value("min_convergence_rate", 0.5);
  return {std::move(with), std::move(without), dist, ik, comfort, home, options};
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  return parse_study_config(io::read_text_file(path), path.parent_path());
}

}  // namespace bite::study
