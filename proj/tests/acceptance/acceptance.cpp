// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "bite/comfort_study.hpp"
#include "bite/controller.hpp"
#include "bite/harness.hpp"
#include "bite/human_sim.hpp"
#include "bite/kinematics.hpp"
#include "bite/perception.hpp"
#include "bite/transfer_fsm.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

using namespace bite;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string fmt(const char* format, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

std::string fmt(const char* format, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

std::string fmt(const char* format, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path config_dir() { return BITE_DEFAULT_CONFIG_DIR; }

controller::Wrench force(double x, double y, double z) { return {Vector3(x, y, z), Vector3::Zero()}; }

Verdict controller_law() {
  const auto t0 = std::chrono::steady_clock::now();
  controller::ControllerState s;
  s.active_gains.k_p.head<3>().setConstant(7.0);
  s.active_gains.k_i.head<3>().setConstant(20.0);
  controller::Wrench f_bar;
  for (int k = 0; k < 500; ++k) std::tie(f_bar, s) = controller::reactive_term(s, force(0, 0.1, 0), 0.001);
  const double elapsed = seconds_since(t0);
  // k_P f + k_I f T with T = 500 ticks
  const double oracle = 7.0 * 0.1 + 20.0 * 0.1 * 0.5;
  const double err = std::abs(f_bar.force.y() - oracle);
  Verdict v;
  v.require(err <= 1e-9, "|f_bar_y - 1.7| <= 1e-9");
  v.require(f_bar.force.x() == 0.0 && f_bar.force.z() == 0.0, "off-axis components zero");
  v.require(elapsed < 1.0, "runtime < 1 s");
  v.note(fmt("f_bar_y = %.12f N, error %.1e", f_bar.force.y(), err));
  return v;
}

Verdict phased_gains() {
  Verdict v;
  const Vector3 seven(7, 7, 7), twenty(20, 20, 20);
  const TransferPhase entry_side[] = {TransferPhase::ApproachArc, TransferPhase::Entry, TransferPhase::BiteWait};
  const TransferPhase exit_side[] = {TransferPhase::Exit, TransferPhase::RetractArc};
  int checked = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (double sign : {1.0, -1.0}) {
      const Vector3 exit_axis = sign * Vector3::Unit(axis);
      for (TransferPhase p : entry_side) {
        const auto g = controller::phase_gains(p, exit_axis);
        v.require(g.k_p.head<3>() == seven && g.k_i.head<3>() == twenty, "entry gains (7, 20) on all force axes");
        ++checked;
      }
      for (TransferPhase p : exit_side) {
        const auto g = controller::phase_gains(p, exit_axis);
        for (int k = 0; k < 3; ++k) {
          const bool along = k == axis;
          v.require(g.k_p[k] == (along ? 2.0 : 7.0) && g.k_i[k] == (along ? 1.0 : 20.0),
                    "exit gains (2, 1) along the exit axis and (7, 20) across");
        }
        ++checked;
      }
    }
  }
  // Oblique exit axis: the gain matrix acts by projection.
  const Vector3 oblique = Vector3(1, -2, 2).normalized();
  const auto g = controller::phase_gains(TransferPhase::Exit, oblique);
  const Matrix3 proj = oblique * oblique.transpose();
  const Matrix3 kp_oracle = 2.0 * proj + 7.0 * (Matrix3::Identity() - proj);
  const Matrix3 ki_oracle = 1.0 * proj + 20.0 * (Matrix3::Identity() - proj);
  v.require((g.force_kp() - kp_oracle).cwiseAbs().maxCoeff() < 1e-12 &&
                (g.force_ki() - ki_oracle).cwiseAbs().maxCoeff() < 1e-12,
            "oblique exit axis gain matrices");
  for (int p = 0; p <= static_cast<int>(TransferPhase::Aborted); ++p) {
    const auto h = controller::phase_gains(static_cast<TransferPhase>(p), oblique);
    v.require(h.k_p.tail<3>().isZero(0.0) && h.k_i.tail<3>().isZero(0.0), "torque gains identically zero");
  }
  v.note(std::to_string(checked) + " phase/axis combinations exact, torque gains zero in all phases");
  return v;
}

Verdict bite_detection() {
  Verdict v;
  const fsm::BiteDetector det;
  const auto first = fsm::detect_bite(det, force(0, 0.31, 0), 0.001);
  v.require(first.result == fsm::BiteResult::Bitten, "0.31 N triggers on the first tick");
  const auto negative = fsm::detect_bite(det, force(0, -0.4, 0), 0.001);
  v.require(negative.result == fsm::BiteResult::Bitten, "-0.4 N triggers");

  fsm::BiteDetector d = det;
  int ticks = 0;
  fsm::BiteResult result = fsm::BiteResult::Waiting;
  while (result == fsm::BiteResult::Waiting && ticks < 5000) {
    const auto u = fsm::detect_bite(d, force(0, 0.2, 0), 0.001);
    d = u.detector;
    result = u.result;
    ++ticks;
  }
  const double timeout = ticks * 0.001;
  v.require(result == fsm::BiteResult::TimedOut, "sustained 0.2 N times out");
  v.require(std::abs(timeout - 1.5) <= 0.001 + 1e-12, "timeout at 1.500 s +- 1 ms");
  v.note(fmt("timeout after %.0f ticks = %.3f s", ticks, timeout));
  return v;
}

Verdict safety_stop() {
  Verdict v;
  for (int axis = 0; axis < 3; ++axis) {
    for (double sign : {1.0, -1.0}) {
      controller::Wrench w;
      w.force[axis] = sign * 3.01;
      controller::ControllerState s = controller::latch({}, controller::safety_check(w, 3.0));
      v.require(s.aborted, "component above 3 N aborts");
      for (int k = 0; k < 100; ++k) s = controller::latch(s, controller::safety_check({}, 3.0));
      v.require(s.aborted, "abort latches");
    }
  }
  v.require(controller::safety_check(force(2.99, -2.99, 2.99), 3.0) == controller::SafetyStatus::Ok,
            "components below 3 N pass");

  // End to end: a 3.5 N push during the approach.
  harness::Scenario sc = harness::load_scenario(config_dir() / "scenarios" / "nominal.json");
  sc.disturbances.push_back({2.0, 2.5, Vector3(0.0, 0.0, 3.5)});
  const harness::TrialReport r = harness::run_trial(sc);
  std::size_t over = r.log.size(), stop = r.log.size();
  for (std::size_t k = 0; k < r.log.size(); ++k) {
    if (over == r.log.size() && r.log[k].f_m.force.cwiseAbs().maxCoeff() > 3.0) over = k;
    if (stop == r.log.size() && r.log[k].phase == TransferPhase::Aborted) stop = k;
  }
  v.require(r.safety_stop && over < r.log.size() && stop < r.log.size(), "trial aborts");
  if (stop < r.log.size() && over < r.log.size()) {
    v.require(stop >= over && stop - over <= 1, "abort within 1 tick of the overload");
    bool frozen = true;
    for (std::size_t k = stop; k < r.log.size(); ++k) {
      frozen = frozen && r.log[k].pose.position == r.log[stop].pose.position &&
               r.log[k].pose.orientation.coeffs() == r.log[stop].pose.orientation.coeffs();
    }
    v.require(frozen, "zero motion after abort");
    v.note(fmt("overload at %.3f s, abort at %.3f s, %.0f frozen ticks", r.log[over].t, r.log[stop].t,
               static_cast<double>(r.log.size() - stop)));
  }
  return v;
}

Verdict ik_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  const kinematics::IkParams params;
  const double ready[7] = {0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785};
  for (const char* file : {"panda_arm.json", "panda_wrist.json"}) {
    const kinematics::ChainModel chain = kinematics::load_chain(config_dir() / file);
    const auto dof = static_cast<Eigen::Index>(chain.dof());
    Eigen::VectorXd ready_q = Eigen::VectorXd::Zero(dof);
    for (int i = 0; i < 7; ++i) ready_q[i] = ready[i];
    const kinematics::JointConfig ready_seed = chain.make_config(ready_q);

    Rng rng(2024);
    int converged = 0, fixed_converged = 0, residual_bad = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd q(dof);
      for (Eigen::Index k = 0; k < dof; ++k) {
        const auto& lim = chain.joints()[static_cast<std::size_t>(k)].limits;
        q[k] = rng.uniform(lim.min, lim.max);
      }
      const Pose target = kinematics::forward_kinematics(chain, chain.make_config(q));
      Eigen::VectorXd seed = q;
      for (Eigen::Index k = 0; k < dof; ++k) seed[k] += rng.uniform(-0.2, 0.2);
      const auto res =
          kinematics::ik_damped_least_squares(chain, target, chain.make_config(seed).clamped(), params);
      if (res.converged) {
        ++converged;
        const Pose reached = kinematics::forward_kinematics(chain, res.q);
        if ((reached.position - target.position).norm() > params.pos_tol ||
            quaternion_distance(reached.orientation, target.orientation) > params.rot_tol ||
            res.iterations > params.max_iter) {
          ++residual_bad;
        }
      }
      if (kinematics::ik_damped_least_squares(chain, target, ready_seed, params).converged) ++fixed_converged;
    }
    v.require(converged >= 990, std::string(file) + " convergence >= 99%");
    v.require(residual_bad == 0, std::string(file) + " FK residual within tolerance");

    double worst = 0.0;
    const double h = 1e-6;
    for (int i = 0; i < 100; ++i) {
      Eigen::VectorXd q(dof);
      for (Eigen::Index k = 0; k < dof; ++k) {
        const auto& lim = chain.joints()[static_cast<std::size_t>(k)].limits;
        q[k] = rng.uniform(lim.min, lim.max);
      }
      const auto cfg = chain.make_config(q);
      const auto jac = kinematics::jacobian(chain, cfg);
      for (Eigen::Index k = 0; k < dof; ++k) {
        Eigen::VectorXd plus = q, minus = q;
        plus[k] += h;
        minus[k] -= h;
        const Pose fp = kinematics::forward_kinematics(chain, kinematics::JointConfig(plus, cfg.limits()));
        const Pose fm = kinematics::forward_kinematics(chain, kinematics::JointConfig(minus, cfg.limits()));
        Vector6 col;
        col.head<3>() = (fp.position - fm.position) / (2.0 * h);
        col.tail<3>() = log_map(fp.orientation * fm.orientation.conjugate()) / (2.0 * h);
        worst = std::max(worst, (jac.col(k) - col).cwiseAbs().maxCoeff());
      }
    }
    v.require(worst <= 1e-5, std::string(file) + " Jacobian within 1e-5 of finite differences");
    v.note(std::string(file) + fmt(": %.1f%% converged, Jacobian err %.1e", converged / 10.0, worst) +
           fmt(", from the fixed ready seed %.1f%% (informational)", fixed_converged / 10.0));
  }
  const double elapsed = seconds_since(t0);
  v.require(elapsed < 60.0, "runtime < 60 s");
  return v;
}

Verdict wrist_study() {
  Verdict v;
  study::StudyConfig cfg = study::load_study_config(config_dir() / "study.json");
  cfg.options.threads = std::max(1u, std::thread::hardware_concurrency());
  v.require(cfg.distribution.count == 10000, "10,000 sampled poses");
  const auto t0 = std::chrono::steady_clock::now();
  const study::StudyReport a = study::run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                                      cfg.ik, cfg.comfort, cfg.home, cfg.options);
  const double elapsed = seconds_since(t0);
  const study::StudyReport b = study::run_wrist_study(cfg.chain_with, cfg.chain_without, cfg.distribution,
                                                      cfg.ik, cfg.comfort, cfg.home, cfg.options);
  v.require(elapsed < 300.0, "study < 5 minutes");
  v.require(a.mean_disp_with < a.mean_disp_without, "with-wrist displacement lower");
  v.require(a.mean_cost_with < a.mean_cost_without, "with-wrist comfort cost lower");
  v.require(a.displacement_test.p_value < 0.01, "displacement p < 0.01");
  v.require(a.comfort_test.p_value < 0.01, "comfort p < 0.01");
  v.require(study::report_to_json(a) == study::report_to_json(b) &&
                study::samples_to_csv(a) == study::samples_to_csv(b),
            "identical bytes on re-run");
  v.note(fmt("displacement %.4f vs %.4f rad", a.mean_disp_with, a.mean_disp_without) +
         fmt(", cost %.5f vs %.5f", a.mean_cost_with, a.mean_cost_without) +
         fmt(", p = %.1e / %.1e", a.displacement_test.p_value, a.comfort_test.p_value) +
         fmt(", %.0f samples used, %.2f s", static_cast<double>(a.used_count), elapsed));
  return v;
}

Verdict offsets() {
  Verdict v;
  const perception::ScanParams scan;
  const auto offsets_of = [&](const human::FoodPreset& food) {
    return perception::compute_offsets(
        perception::food_bounding_box(perception::synth_depth_scan(food, Pose::identity(), scan, 1)));
  };
  const auto centered = offsets_of(human::cube_food(10.0));
  v.require(centered.dx == 0.0 && !std::signbit(centered.dx), "centered cube dx = 0 exactly");
  const auto shifted_x = offsets_of(human::cube_food(6.0, Vector3(5.0, 0.0, 0.0)));
  v.require(std::abs(shifted_x.dx + 5.0) <= 1e-9, "x in [2, 8] mm gives dx = -5 mm");
  const auto shifted_y = offsets_of(human::cube_food(10.0, Vector3(0.0, 5.0, 0.0)));
  v.require(std::abs(shifted_y.dy + 10.0) <= 1e-9, "y in [0, 10] mm gives dy = -10 mm");
  bool threw = false;
  try {
    perception::food_bounding_box(perception::PointCloud{});
  } catch (const perception::PerceptionError&) {
    threw = true;
  }
  v.require(threw, "empty cloud is a hard error");
  v.note(fmt("dx %.12g, dx %.12g, dy %.12g mm", centered.dx, shifted_x.dx, shifted_y.dy));
  return v;
}

Verdict trajectory_geometry() {
  Verdict v;
  const Pose mouth(Vector3(0.70, 0.30, 0.60), from_axes(-Vector3::UnitY(), Vector3::UnitZ(), -Vector3::UnitX()));
  const fsm::PlanParams params;
  const Pose pre(mouth.position, fsm::transfer_orientation(mouth, params.pitch));
  const fsm::TrajectoryPlan plan = fsm::build_transfer_plan(pre, mouth, params);
  const Vector3 center = fsm::arc_center(pre, params.radius);
  double worst_radius = 0.0;
  std::size_t arc_points = 0;
  for (fsm::SegmentKind kind : {fsm::SegmentKind::Arc, fsm::SegmentKind::ArcReturn}) {
    const fsm::Segment& s = plan.segment(kind);
    for (std::size_t i = s.first; i <= s.last; ++i) {
      worst_radius = std::max(worst_radius, std::abs((plan.waypoints()[i].pose.position - center).norm() - 0.45));
      ++arc_points;
    }
  }
  v.require(worst_radius <= 1e-9, "arc waypoints 0.45 m from the center");
  const Matrix3 r = mouth.rotation();
  const Vector3 expected = pre.position - 0.018 * r.col(2) - params.lowering * r.col(1);
  const fsm::Segment& entry = plan.segment(fsm::SegmentKind::LinearEntry);
  const double entry_err = (plan.waypoints()[entry.last].pose.position - expected).norm();
  v.require(entry_err <= 1e-12, "entry terminal position");
  v.require(std::abs(plan.duration() - 10.0) <= 1e-12, "plan lasts 10 s");
  v.note(fmt("%.0f arc points, radius err %.1e m, entry err %.1e m", static_cast<double>(arc_points), worst_radius,
             entry_err) +
         fmt(", duration %.3f s", plan.duration()));
  return v;
}

Verdict end_to_end() {
  Verdict v;
  const harness::Scenario sc = harness::load_scenario(config_dir() / "scenarios" / "nominal.json");
  const auto t0 = std::chrono::steady_clock::now();
  const harness::TrialReport a = harness::run_trial(sc);
  const double elapsed = seconds_since(t0);
  v.require(elapsed < 5.0, "runs in < 5 s");
  v.require(a.outcome == harness::Outcome::Success, "outcome success");
  v.require(a.log.size() == 10001, "10,001 log rows");

  const fs::path path = fs::temp_directory_path() / "bite_acceptance_replay.btlg";
  harness::write_log(a, path);
  const std::vector<harness::LogRecord> stored = harness::read_log(path);
  fs::remove(path);
  const harness::TrialReport b = harness::run_trial(sc);
  bool identical = stored.size() == b.log.size();
  for (std::size_t k = 0; identical && k < stored.size(); ++k) {
    const auto& x = stored[k];
    const auto& y = b.log[k];
    identical = x.t == y.t && x.pose.to_array() == y.pose.to_array() && x.f_m.to_vector() == y.f_m.to_vector() &&
                x.phase == y.phase && x.setpoint.to_array() == y.setpoint.to_array() && x.deviation == y.deviation;
  }
  v.require(identical, "replay bit-identical");
  v.note(fmt("%.0f rows, simulated %.1f s in %.3f s wall", static_cast<double>(a.log.size()), a.log.back().t,
             elapsed));
  return v;
}

Verdict reactivity_ordering() {
  Verdict v;
  harness::Scenario sc = harness::load_scenario(config_dir() / "scenarios" / "disturbed.json");
  v.require(!sc.force_trace.empty(), "recorded trace loaded");
  double dev[3] = {0, 0, 0};
  const char* presets[3] = {"more_reactive", "ours", "less_reactive"};
  for (int i = 0; i < 3; ++i) {
    sc.gains = controller::PhasedGains::preset(presets[i]);
    const harness::TrialReport r = harness::run_trial(sc);
    v.require(r.log.size() == 10001, std::string(presets[i]) + " completes the full plan");
    dev[i] = r.mean_deviation;
  }
  v.require(dev[0] > dev[1] && dev[1] > dev[2], "more_reactive > ours > less_reactive");
  v.note(fmt("mean deviation %.2f > %.2f > %.2f mm", dev[0] * 1e3, dev[1] * 1e3, dev[2] * 1e3));
  return v;
}

Verdict suite_bookkeeping() {
  Verdict v;
  const harness::SuiteConfig suite = harness::load_suite(config_dir() / "suite_66.json");
  const harness::SuiteReport r = harness::run_suite(suite, std::max(1u, std::thread::hardware_concurrency()));
  std::size_t refusals = 0, tally = 0;
  bool exact = true;
  for (const harness::SuiteTrial& t : r.trials) {
    if (t.refuse) ++refusals;
    exact = exact && (t.refuse == (t.outcome == harness::Outcome::BiteFailure));
  }
  for (const auto& [name, m] : r.methods) {
    for (const auto& [outcome, n] : m.counts) tally += n;
  }
  v.require(r.total == 66 && r.trials.size() == 66, "66 trials");
  v.require(r.successes + r.failures == 66 && tally == 66, "counts sum to 66");
  v.require(exact, "bite failures are exactly the refuse-script trials");
  v.note(std::to_string(r.successes) + " success + " + std::to_string(r.failures) + " failure, " +
         std::to_string(refusals) + " refusals");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"controller law closed form", controller_law},
      {"phased reactivity gains", phased_gains},
      {"bite detection", bite_detection},
      {"safety stop", safety_stop},
      {"IK quality", ik_quality},
      {"wrist comfort study", wrist_study},
      {"food offset pipeline", offsets},
      {"trajectory geometry", trajectory_geometry},
      {"end-to-end trial", end_to_end},
      {"reactivity ordering", reactivity_ordering},
      {"suite bookkeeping", suite_bookkeeping},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double elapsed = seconds_since(t0);
    if (!v.pass) ++failed;
    std::printf("%s %2d %s: %s [%.2f s]\n", v.pass ? "PASS" : "FAIL", index, name, v.detail.c_str(), elapsed);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
