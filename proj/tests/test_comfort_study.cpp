#include "doctest.h"

#include "bite/comfort_study.hpp"
#include "bite/io.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>

using namespace bite;
using namespace bite::study;

namespace {

StudyConfig default_config() { return load_study_config(testing::config_dir() / "study.json"); }

ComfortParams simple_cone() {
  ComfortParams c;
  c.head_position = Vector3(1.0, 0.0, 0.5);
  c.axis = -Vector3::UnitX();
  c.half_angle = 0.3;
  c.length = 0.6;
  return c;
}

}  // namespace

TEST_CASE("sampling yields the requested count inside the bounds") {
  PoseDistribution d;
  d.center = Pose(Vector3(0.5, 0.2, 0.4), axis_angle(Vector3(1, 2, 3), 0.7));
  d.frame = axis_angle(Vector3(0, 1, 1), 0.4).toRotationMatrix();
  d.trans_lo = Vector3(-0.1, -0.05, 0.0);
  d.trans_hi = Vector3(0.1, 0.02, 0.03);
  d.seed = 11;
  const auto params = sample_pose_params(d);
  const auto poses = sample_fork_poses(d);
  REQUIRE(params.size() == 10000);
  REQUIRE(poses.size() == 10000);
  PoseParams lo = PoseParams::Constant(1e9), hi = PoseParams::Constant(-1e9);
  for (std::size_t i = 0; i < params.size(); ++i) {
    lo = lo.cwiseMin(params[i]);
    hi = hi.cwiseMax(params[i]);
    // The pose translation, expressed in the frame, recovers the parameter.
    const Vector3 t = d.frame.transpose() * (poses[i].position - d.center.position);
    CHECK((t - params[i].head<3>()).norm() < 1e-12);
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(lo[k] >= d.trans_lo[k]);
    CHECK(hi[k] <= d.trans_hi[k]);
    CHECK(lo[3 + k] >= d.rot_lo[k]);
    CHECK(hi[3 + k] <= d.rot_hi[k]);
    // Uniform draws of this size reach close to both ends.
    CHECK(lo[k] - d.trans_lo[k] < 0.01 * (d.trans_hi[k] - d.trans_lo[k]));
    CHECK(d.rot_hi[k] - hi[3 + k] < 0.01 * (d.rot_hi[k] - d.rot_lo[k]));
  }
  CHECK(sample_pose_params(d) == params);
}

TEST_CASE("zero-width bounds reproduce the center") {
  PoseDistribution d;
  d.center = Pose(Vector3(0.3, -0.1, 0.6), axis_angle(Vector3(0, 0, 1), 1.1));
  d.frame = axis_angle(Vector3(1, 0, 0), 0.3).toRotationMatrix();
  d.trans_lo = d.trans_hi = d.rot_lo = d.rot_hi = Vector3::Zero();
  d.count = 50;
  for (const Pose& p : sample_fork_poses(d)) {
    CHECK((p.position - d.center.position).norm() < 1e-15);
    CHECK(quaternion_distance(p.orientation, d.center.orientation) < 1e-7);
  }
}

TEST_CASE("rotations are about the frame axes") {
  PoseDistribution d;
  d.center = Pose(Vector3::Zero(), axis_angle(Vector3(1, 1, 0), 0.5));
  d.frame = axis_angle(Vector3(0, 0, 1), std::numbers::pi / 2).toRotationMatrix();
  PoseParams p = PoseParams::Zero();
  p[3] = 0.2;
  const Pose pose = pose_from_params(d, p);
  // Rotating about the frame's x axis (world y here).
  const Quaternion expected = axis_angle(Vector3::UnitY(), 0.2) * d.center.orientation;
  CHECK(quaternion_distance(pose.orientation, expected) < 1e-12);
}

TEST_CASE("invalid distributions are rejected") {
  PoseDistribution d;
  d.count = 0;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.count = 5;
  d.trans_lo[1] = 0.2;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.trans_lo[1] = std::nan("");
  CHECK_THROWS_AS(sample_fork_poses(d), std::invalid_argument);
}

TEST_CASE("cone penetration geometry") {
  const ComfortParams c = simple_cone();
  // On the axis at half the length: the full cone radius there.
  const Vector3 mid = c.head_position + 0.5 * c.length * c.axis;
  CHECK(cone_penetration(mid, c) == doctest::Approx(0.5 * c.length * std::tan(c.half_angle)).epsilon(1e-14));
  // Behind the apex, beyond the length, and outside the boundary.
  CHECK(cone_penetration(c.head_position - 0.1 * c.axis, c) == 0.0);
  CHECK(cone_penetration(c.head_position + 0.61 * c.axis, c) == 0.0);
  CHECK(cone_penetration(mid + Vector3(0, 0.3, 0), c) == 0.0);
  CHECK(cone_penetration(c.head_position, c) == 0.0);

  // Moving radially inward at fixed depth never lowers the penalty.
  const Vector3 radial = Vector3(0, 1, 1).normalized();
  double prev = -1.0;
  for (int i = 0; i <= 200; ++i) {
    const double r = 0.3 * (1.0 - i / 200.0);
    const double v = cone_penetration(mid + r * radial, c);
    CHECK(v >= prev);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("comfort cost sums weighted link penetrations") {
  const auto chain = testing::arm_chain();
  Rng rng(5);
  ComfortParams c = simple_cone();
  c.head_position = Vector3(0.6, 0.0, 0.5);
  c.half_angle = 0.6;
  c.arm_weights = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
  c.tool_weight = 4.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = testing::random_config(chain, rng);
    const auto pts = kinematics::link_points(chain, q);
    REQUIRE(pts.size() == 8);
    double expected = 0.0;
    for (std::size_t i = 0; i < 7; ++i) expected += c.arm_weights[i] * cone_penetration(pts[i], c);
    expected += c.tool_weight * cone_penetration(pts[7], c);
    const double cost = comfort_cost(chain, q, c);
    CHECK(cost == doctest::Approx(expected).epsilon(1e-12));
    CHECK(cost >= 0.0);
  }

  // A cone opening away from the robot never sees it.
  ComfortParams away = c;
  away.head_position = Vector3(3.0, 0.0, 0.5);
  away.axis = Vector3::UnitX();
  for (int trial = 0; trial < 20; ++trial) {
    CHECK(comfort_cost(chain, testing::random_config(chain, rng), away) == 0.0);
  }

  ComfortParams bad = c;
  bad.half_angle = std::numbers::pi / 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.arm_weights[2] = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("wrist weights apply to the wrist joint origins") {
  ComfortParams c;
  c.arm_weights = std::vector<double>(7, 1.0);
  c.wrist_weight = 0.25;
  c.tool_weight = 2.0;
  CHECK(c.weight(6, 10, true) == 1.0);
  CHECK(c.weight(7, 10, true) == 0.25);
  CHECK(c.weight(8, 10, true) == 0.25);
  CHECK(c.weight(9, 10, true) == 2.0);
  CHECK(c.weight(7, 8, false) == 2.0);
}

TEST_CASE("default study config loads") {
  const StudyConfig cfg = default_config();
  CHECK(cfg.chain_with.has_wrist());
  CHECK_FALSE(cfg.chain_without.has_wrist());
  CHECK(cfg.distribution.count == 10000);
  CHECK(cfg.home.size() == 9);
  CHECK(cfg.home.within_limits());
  // The home reaches the distribution center on both chains.
  const Pose fk = kinematics::forward_kinematics(cfg.chain_with, cfg.home);
  CHECK((fk.position - cfg.distribution.center.position).norm() < 1e-3);
  CHECK(quaternion_distance(fk.orientation, cfg.distribution.center.orientation) < 1e-2);
  const auto arm_home = cfg.chain_without.make_config(cfg.home.angles().head(7));
  const Pose fk7 = kinematics::forward_kinematics(cfg.chain_without, arm_home);
  CHECK((fk7.position - fk.position).norm() < 1e-9);

  std::string text = io::read_text_file(testing::config_dir() / "study.json");
  const auto pos = text.find("\"home\"");
  REQUIRE(pos != std::string::npos);
  std::string bad = text.substr(0, pos) + "\"home\": [0, 0],\n \"unused\"" +
                    text.substr(text.find(':', pos));
  CHECK_THROWS_AS(parse_study_config(bad, testing::config_dir()), io::ConfigError);
}

TEST_CASE("identical chains give identical statistics") {
  StudyConfig cfg = default_config();
  const auto locked = cfg.chain_with.with_locked_joint(7, 0.0).with_locked_joint(8, 0.0);
  cfg.distribution.count = 200;
  const StudyReport r =
      run_wrist_study(locked, locked, cfg.distribution, cfg.ik, cfg.comfort, cfg.home);
  CHECK(r.converged_with == r.converged_without);
  CHECK(std::abs(r.mean_disp_with - r.mean_disp_without) <= 1e-12);
  CHECK(std::abs(r.mean_cost_with - r.mean_cost_without) <= 1e-12);
  CHECK(std::abs(r.max_cost_with - r.max_cost_without) <= 1e-12);
  for (std::size_t j = 0; j < 7; ++j) {
    CHECK(std::abs(r.joint_disp_with[j] - r.joint_disp_without[j]) <= 1e-12);
  }
  CHECK(r.displacement_test.n == 0);
  CHECK(r.comfort_test.n == 0);
}

TEST_CASE("mini study matches a scripted recomputation") {
  StudyConfig cfg = default_config();
  cfg.distribution.count = 10;
  cfg.options.min_convergence_rate = 0.0;
  const StudyReport r = run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                        cfg.ik, cfg.comfort, cfg.home, cfg.options);
  REQUIRE(r.sample_count == 10);

  const auto poses = sample_fork_poses(cfg.distribution);
  const auto arm_home = cfg.chain_without.make_config(cfg.home.angles().head(7));
  std::size_t used = 0;
  double disp_w = 0, disp_wo = 0, cost_w = 0, cost_wo = 0;
  std::vector<double> joint_w(7, 0.0), joint_wo(7, 0.0);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto a = kinematics::ik_damped_least_squares(cfg.chain_with, poses[i], cfg.home, cfg.ik);
    const auto b = kinematics::ik_damped_least_squares(cfg.chain_without, poses[i], arm_home, cfg.ik);
    CHECK(r.samples[i].converged_with == a.converged);
    CHECK(r.samples[i].converged_without == b.converged);
    if (!a.converged || !b.converged) continue;
    ++used;
    double sw = 0, swo = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      const double dw = std::abs(a.q[j] - cfg.home[j]);
      const double dwo = std::abs(b.q[j] - arm_home[j]);
      joint_w[j] += dw;
      joint_wo[j] += dwo;
      sw += dw;
      swo += dwo;
    }
    disp_w += sw / 7.0;
    disp_wo += swo / 7.0;
    cost_w += comfort_cost(cfg.chain_with, a.q, cfg.comfort);
    cost_wo += comfort_cost(cfg.chain_without, b.q, cfg.comfort);
  }
  REQUIRE(used > 0);
  CHECK(r.used_count == used);
  const double n = static_cast<double>(used);
  CHECK(r.mean_disp_with == doctest::Approx(disp_w / n).epsilon(1e-12));
  CHECK(r.mean_disp_without == doctest::Approx(disp_wo / n).epsilon(1e-12));
  CHECK(r.mean_cost_with == doctest::Approx(cost_w / n).epsilon(1e-12));
  CHECK(r.mean_cost_without == doctest::Approx(cost_wo / n).epsilon(1e-12));
  for (std::size_t j = 0; j < 7; ++j) {
    CHECK(r.joint_disp_with[j] == doctest::Approx(joint_w[j] / n).epsilon(1e-12));
    CHECK(r.joint_disp_without[j] == doctest::Approx(joint_wo[j] / n).epsilon(1e-12));
  }
}

TEST_CASE("study output is deterministic across runs and thread counts") {
  StudyConfig cfg = default_config();
  cfg.distribution.count = 300;
  StudyOptions serial = cfg.options;
  serial.threads = 1;
  StudyOptions parallel = cfg.options;
  parallel.threads = 3;
  const StudyReport a = run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                        cfg.ik, cfg.comfort, cfg.home, serial);
  const StudyReport b = run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                        cfg.ik, cfg.comfort, cfg.home, parallel);
  CHECK(report_to_json(a) == report_to_json(b));
  CHECK(samples_to_csv(a) == samples_to_csv(b));

  // Exclusion symmetry: one sample set feeds both chains' statistics.
  std::size_t used = 0;
  for (const SampleRecord& s : a.samples) {
    CHECK(s.cost_with >= 0.0);
    CHECK(s.cost_without >= 0.0);
    if (s.used()) ++used;
  }
  CHECK(a.used_count == used);
  CHECK(a.displacement_test.n <= used);
  CHECK(a.convergence_rate == doctest::Approx(static_cast<double>(used) / 300.0));

  const std::string csv = samples_to_csv(a);
  CHECK(csv.rfind("index,px,py,pz,qw,qx,qy,qz,converged_with,converged_without,used,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 301);
}

TEST_CASE("low convergence invalidates the study") {
  StudyConfig cfg = default_config();
  cfg.distribution.count = 40;
  cfg.distribution.trans_lo = Vector3::Constant(1.5);
  cfg.distribution.trans_hi = Vector3::Constant(2.0);
  CHECK_THROWS_AS(run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution, cfg.ik,
                                  cfg.comfort, cfg.home, cfg.options),
                  StudyInvalid);
}

TEST_CASE("the wrist lowers displacement and comfort cost") {
  const StudyConfig cfg = default_config();
  const StudyReport r = run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                        cfg.ik, cfg.comfort, cfg.home, cfg.options);
  CHECK(r.convergence_rate >= 0.5);
  CHECK(r.mean_disp_with < r.mean_disp_without);
  CHECK(r.mean_cost_with < r.mean_cost_without);
  CHECK(r.max_cost_with < r.max_cost_without);
  CHECK(r.displacement_test.p_value < 0.01);
  CHECK(r.comfort_test.p_value < 0.01);
}
