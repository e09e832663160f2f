#include "bite/harness.hpp"

#include "bite/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <thread>

namespace bite::harness {

namespace {

using nlohmann::json;
using controller::ControllerState;

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr char kLogMagic[4] = {'B', 'T', 'L', 'G'};
constexpr std::uint32_t kLogVersion = 1;
constexpr std::size_t kRecordDoubles = 1 + 7 + 6 + 1 + 7 + 1;

Vector3 vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw io::ConfigError(std::string(what) + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vector6 vec6(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 6) throw io::ConfigError(std::string(what) + " must be a 6-vector");
  Vector6 v;
  for (int k = 0; k < 6; ++k) v[k] = j[static_cast<std::size_t>(k)].get<double>();
  return v;
}

Quaternion quat_wxyz(const json& j) {
  if (!j.is_array() || j.size() != 4) throw io::ConfigError("orientation_wxyz must have 4 entries");
  const Quaternion q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  if (!(q.norm() > 0.5)) throw io::ConfigError("orientation quaternion is degenerate");
  return q.normalized();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& name) {
  const std::filesystem::path p(name);
  if (p.is_absolute()) return p;
  if (!base.empty() && std::filesystem::exists(base / p)) return base / p;
  return std::filesystem::path(BITE_DEFAULT_CONFIG_DIR) / p;
}

controller::SafetyRule parse_safety_rule(const std::string& s) {
  if (s == "per_component") return controller::SafetyRule::PerComponent;
  if (s == "norm") return controller::SafetyRule::Norm;
  throw io::ConfigError("unknown safety rule: " + s);
}

perception::DyRule parse_dy_rule(const std::string& s) {
  if (s == "top_extent") return perception::DyRule::TopExtent;
  if (s == "minimum_y") return perception::DyRule::MinimumY;
  throw io::ConfigError("unknown dy rule: " + s);
}

TransferMode parse_mode(const std::string& s) {
  if (s == "in_mouth") return TransferMode::InMouth;
  if (s == "fixed_pose") return TransferMode::FixedPose;
  throw io::ConfigError("unknown transfer mode: " + s);
}

std::vector<Vector3> read_force_trace(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  std::vector<Vector3> trace;
  std::size_t pos = text.find('\n');
  if (text.rfind("t_s,fx,fy,fz", 0) != 0 || pos == std::string::npos) {
    throw io::ConfigError("force trace must start with the header t_s,fx,fy,fz");
  }
  while (++pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line(text.data() + pos, end - pos);
    pos = end;
    if (line.empty()) continue;
    double v[4];
    for (int k = 0; k < 4; ++k) {
      const std::size_t comma = k < 3 ? line.find(',') : line.size();
      if (comma == std::string_view::npos) throw io::ConfigError("force trace rows need 4 columns");
      v[k] = io::parse_double(line.substr(0, comma));
      line = k < 3 ? line.substr(comma + 1) : std::string_view();
    }
    trace.emplace_back(v[1], v[2], v[3]);
  }
  return trace;
}

Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
  Scenario s;
  if (!j.contains("seed")) throw io::ConfigError("scenario needs an explicit seed");
  s.seed = j.at("seed").get<std::uint64_t>();
  s.name = j.value("name", s.name);
  s.preset = j.value("preset", s.preset);
  s.gains = controller::PhasedGains::preset(s.preset);
  s.mode = parse_mode(j.value("mode", std::string("in_mouth")));

  if (j.contains("chain") && !j["chain"].is_null()) {
    s.chain_file = resolve(base_dir, j["chain"].get<std::string>());
  }
  s.joint_tracking = j.value("joint_tracking", !s.chain_file.empty());

  const auto presets = human::load_food_presets(
      resolve(base_dir, j.value("food_presets", std::string("food_presets.json"))));
  s.food = human::find_preset(presets, j.at("food").get<std::string>());
  if (j.contains("food_offset_mm")) s.food_pose = Pose(vec3(j["food_offset_mm"], "food_offset_mm") / 1000.0);

  const json& m = j.at("mouth");
  s.mouth.center = Pose(vec3(m.at("position"), "mouth position"), quat_wxyz(m.at("orientation_wxyz")));
  s.mouth.aperture = m.value("aperture_m", s.mouth.aperture);
  s.mouth.half_width = m.value("half_width_m", s.mouth.half_width);
  s.mouth.stiffness = m.value("stiffness_n_per_m", s.mouth.stiffness);
  s.mouth.damping = m.value("damping_ns_per_m", s.mouth.damping);

  if (j.contains("bite")) {
    const json& b = j["bite"];
    s.bite.t_bite = b.value("t_bite_s", s.bite.t_bite);
    s.bite.peak_force = b.value("peak_force_n", s.bite.peak_force);
    s.bite.ramp = b.value("ramp_s", s.bite.ramp);
    s.bite.refuse = b.value("refuse", s.bite.refuse);
  }
  if (j.contains("head_perturbation")) {
    const json& h = j["head_perturbation"];
    s.perturbation = human::parse_perturbation(h.value("kind", std::string("none")));
    s.perturbation_params.amplitude = h.value("amplitude_m", 0.0);
    s.perturbation_params.period = h.value("period_s", s.perturbation_params.period);
    if (h.contains("direction")) s.perturbation_params.direction = vec3(h["direction"], "direction");
    s.perturbation_params.step_std = h.value("step_std_m", s.perturbation_params.step_std);
  }

  if (j.contains("entry_gains")) {
    s.gains.entry_kp = vec6(j["entry_gains"].at("k_p"), "entry k_p");
    s.gains.entry_ki = vec6(j["entry_gains"].at("k_i"), "entry k_i");
  }
  if (j.contains("exit_gains")) {
    s.gains.exit_kp = vec6(j["exit_gains"].at("k_p"), "exit k_p");
    s.gains.exit_ki = vec6(j["exit_gains"].at("k_i"), "exit k_i");
  }
  if (j.contains("plant")) {
    s.mass = j["plant"].value("mass_kg", s.mass);
    s.inertia = j["plant"].value("inertia_kgm2", s.inertia);
  }
  s.impedance = controller::ImpedanceParams::critically_damped(200.0, 10.0, s.mass, s.inertia);
  if (j.contains("impedance")) {
    const json& im = j["impedance"];
    if (im.contains("stiffness")) {
      s.impedance.stiffness = vec6(im["stiffness"], "impedance stiffness");
      s.impedance.damping = vec6(im.at("damping"), "impedance damping");
    } else {
      s.impedance = controller::ImpedanceParams::critically_damped(
          im.value("k_linear", 200.0), im.value("k_angular", 10.0), s.mass, s.inertia);
    }
  }
  s.safety_limit = j.value("safety_limit_n", s.safety_limit);
  s.safety_rule = parse_safety_rule(j.value("safety_rule", std::string("per_component")));
  s.windup_limit = j.value("windup_limit_n", s.windup_limit);

  if (j.contains("segments")) {
    const json& g = j["segments"];
    s.plan.approach_duration = g.value("approach_s", s.plan.approach_duration);
    s.plan.entry_duration = g.value("entry_s", s.plan.entry_duration);
    s.plan.dwell_duration = g.value("dwell_s", s.plan.dwell_duration);
    s.plan.exit_duration = g.value("exit_s", s.plan.exit_duration);
    s.plan.retract_duration = g.value("retract_s", s.plan.retract_duration);
  }
  if (j.contains("plan")) {
    const json& p = j["plan"];
    s.plan.radius = p.value("radius_m", s.plan.radius);
    s.plan.start_angle = p.value("start_angle_deg", s.plan.start_angle / kDeg) * kDeg;
    s.plan.pitch = p.value("pitch_deg", s.plan.pitch / kDeg) * kDeg;
    s.plan.entry_depth = p.value("entry_depth_m", s.plan.entry_depth);
    s.plan.lowering = p.value("lowering_m", s.plan.lowering);
  }
  if (j.contains("bite_detection")) {
    s.bite_threshold = j["bite_detection"].value("threshold_n", s.bite_threshold);
    s.bite_timeout = j["bite_detection"].value("timeout_s", s.bite_timeout);
  }
  if (j.contains("perception")) {
    const json& p = j["perception"];
    s.scan.resolution_mm = p.value("resolution_mm", s.scan.resolution_mm);
    s.scan.depth_noise_mm = p.value("depth_noise_mm", s.scan.depth_noise_mm);
    s.dy_rule = parse_dy_rule(p.value("dy_rule", std::string("top_extent")));
  }
  if (j.contains("injected_mouth_error_m")) {
    s.mouth_error = vec3(j["injected_mouth_error_m"], "injected_mouth_error_m");
  }
  for (const json& d : j.value("disturbances", json::array())) {
    s.disturbances.push_back(
        {d.at("start_s").get<double>(), d.at("end_s").get<double>(), vec3(d.at("force_n"), "force_n")});
  }
  if (j.contains("force_trace_csv")) {
    s.force_trace = read_force_trace(resolve(base_dir, j["force_trace_csv"].get<std::string>()));
  }
  s.tether_stiffness = j.value("tether_stiffness_n_per_m", s.tether_stiffness);
  s.lean_distance = j.value("lean_m", s.lean_distance);
  s.abort_hold = j.value("abort_hold_s", s.abort_hold);
  return s;
}

json scenario_json(const std::string& text, const std::filesystem::path& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw io::ConfigError(path.string() + ": " + e.what());
  }
}

template <typename F>
auto config_guard(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const io::ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw io::ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw io::ConfigError(e.what());
  }
}

Wrench world_wrench(const Matrix3& r, const Wrench& local) { return {r * local.force, r * local.torque}; }

double max_abs_component(const Wrench& w) {
  return std::max(w.force.cwiseAbs().maxCoeff(), w.torque.cwiseAbs().maxCoeff());
}

kinematics::JointConfig ready_config(const kinematics::ChainModel& chain) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.dof()));
  const double ready[7] = {0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785};
  for (std::size_t i = 0; i < std::min<std::size_t>(7, chain.dof()); ++i) {
    q[static_cast<Eigen::Index>(i)] = ready[i];
  }
  return chain.make_config(q);
}

/// Same timeline as the in-mouth plan, but the fork holds the pre-mouth
/// pose through entry, dwell and exit.
fsm::TrajectoryPlan fixed_pose_plan(const Pose& pre, const Pose& mouth, const fsm::PlanParams& p) {
  const Vector3 outward = mouth.rotation().col(2);
  auto hold = [&](double duration, fsm::SegmentKind kind) {
    return fsm::TrajectoryPlan(fsm::dwell_segment(pre, duration, p.sample_rate).waypoints(), kind);
  };
  fsm::TrajectoryPlan plan =
      fsm::plan_arc(pre, p.radius, p.start_angle, p.approach_duration, p.sample_rate, outward);
  plan.append(hold(p.entry_duration, fsm::SegmentKind::LinearEntry));
  plan.append(hold(p.dwell_duration, fsm::SegmentKind::Dwell));
  plan.append(hold(p.exit_duration, fsm::SegmentKind::LinearExit));
  plan.append(fsm::reversed(
      fsm::plan_arc(pre, p.radius, p.start_angle, p.retract_duration, p.sample_rate, outward),
      fsm::SegmentKind::ArcReturn));
  return plan;
}

}  // namespace

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success: return "success";
    case Outcome::BiteFailure: return "bite_failure";
    case Outcome::Drop: return "drop";
    case Outcome::Imprecise: return "imprecise";
    case Outcome::Aborted: return "aborted";
  }
  return "unknown";
}

std::string_view to_string(TransferMode mode) {
  return mode == TransferMode::InMouth ? "in_mouth" : "fixed_pose";
}

void Scenario::validate() const {
  food.validate();
  mouth.validate();
  perception::validate_mouth_frame(mouth.center.rotation(), 1e-6);
  bite.validate();
  perturbation_params.validate();
  impedance.validate();
  if (!(mass > 0.0) || !(inertia > 0.0)) throw std::invalid_argument("plant mass must be positive");
  if (!(safety_limit > 0.0)) throw std::invalid_argument("safety limit must be positive");
  if (!(bite_threshold > 0.0) || !(bite_timeout > 0.0)) {
    throw std::invalid_argument("bite detection needs a positive threshold and timeout");
  }
  if (!(tether_stiffness >= 0.0) || !(lean_distance >= 0.0) || !(abort_hold >= 0.0)) {
    throw std::invalid_argument("tether stiffness, lean and abort hold must be non-negative");
  }
  if (!mouth_error.allFinite()) throw std::invalid_argument("mouth error must be finite");
  for (const ForcePulse& p : disturbances) {
    if (!(p.end >= p.start) || !p.force.allFinite()) throw std::invalid_argument("invalid force pulse");
  }
  for (const Vector3& f : force_trace) {
    if (!f.allFinite()) throw std::invalid_argument("force trace must be finite");
  }
}

Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir) {
  return config_guard([&] {
    Scenario s = scenario_from_json(scenario_json(json_text, base_dir), base_dir);
    s.validate();
    return s;
  });
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(io::read_text_file(path), path.parent_path());
}

TickResult simulate_tick(const VirtualRobotState& state, const ControllerState& ctrl,
                         const fsm::FsmContext& fsm_ctx, const TickWorld& world,
                         const std::optional<Pose>& prev_setpoint) {
  TickResult out{state, ctrl, fsm_ctx, {}, {}, {}, {}};
  const double dt = world.dt;

  // (1) Sensors: the F/T reading is the force the tool exerts on its
  // surroundings, the negative of the forces acting on the fork.
  out.contact = human::contact_force(state.pose, state.twist, world.mouth);
  const Wrench f_m = -(out.contact + world.external);
  if (!f_m.finite()) throw controller::SensorFault("non-finite force measurement");

  // (2) Safety.
  out.ctrl = controller::latch(ctrl, controller::safety_check(f_m, world.safety_limit, world.safety_rule));

  // (3) FSM and phase gains.
  const fsm::StepResult step =
      fsm::step(fsm_ctx, *world.plan, {f_m, world.clock, out.ctrl.aborted, dt});
  out.fsm = step.context;
  out.events = step.events;
  out.setpoint = step.setpoint;
  const TransferPhase phase = out.fsm.phase;
  if (phase != fsm_ctx.phase && phase != TransferPhase::Done && phase != TransferPhase::Aborted) {
    out.ctrl = controller::enter_phase(out.ctrl, phase,
                                       controller::phase_gains(phase, world.exit_axis, world.gains));
  }

  out.record = {world.clock, state.pose, f_m, phase, out.setpoint,
                (state.pose.position - out.setpoint.position).norm()};
  if (out.ctrl.aborted) {
    out.state.twist.setZero();
    return out;
  }

  // (4) Impedance wrench toward the setpoint.
  Vector6 sp_velocity = Vector6::Zero();
  if (prev_setpoint) {
    sp_velocity.head<3>() = (out.setpoint.position - prev_setpoint->position) / dt;
    sp_velocity.tail<3>() = log_map(out.setpoint.orientation * prev_setpoint->orientation.conjugate()) / dt;
  }
  const Wrench f = controller::desired_wrench(world.impedance, pose_error(out.setpoint, state.pose),
                                              sp_velocity - state.twist);

  // (5) Reactive term.
  const auto [f_bar, next_ctrl] = controller::reactive_term(out.ctrl, f_m, dt);
  out.ctrl = next_ctrl;

  // (6) Admittance plant, semi-implicit Euler.
  const Vector6 net = f.to_vector() - f_bar.to_vector() - f_m.to_vector();
  out.state.twist += net.cwiseQuotient(state.mass) * dt;
  out.state.pose.position += out.state.twist.head<3>() * dt;
  out.state.pose.orientation =
      (exp_map(out.state.twist.tail<3>() * dt) * state.pose.orientation).normalized();
  return out;
}

Outcome classify(bool imprecise, bool dropped, bool timed_out, bool aborted_in_wait, bool slipped,
                 bool released, bool aborted) {
  if (imprecise) return Outcome::Imprecise;
  if (dropped) return Outcome::Drop;
  if (timed_out || aborted_in_wait || slipped) return Outcome::BiteFailure;
  if (aborted) return Outcome::Aborted;
  if (!released) return Outcome::BiteFailure;
  return Outcome::Success;
}

TrialReport run_trial(const Scenario& scenario) {
  scenario.validate();
  const double dt = controller::kTickPeriod;
  TrialReport rep;
  rep.scenario = scenario.name;
  rep.seed = scenario.seed;
  rep.preset = scenario.preset;
  rep.mode = scenario.mode;

  // Perception: food offsets from a depth scan, mouth pose from landmarks.
  const perception::PointCloud cloud = perception::synth_depth_scan(
      scenario.food, scenario.food_pose, scenario.scan, derive_seed(scenario.seed, 1));
  rep.offsets = perception::compute_offsets(perception::food_bounding_box(cloud), scenario.dy_rule);

  const Pose& true_mouth = scenario.mouth.center;
  const Matrix3 r_true = true_mouth.rotation();
  const Pose perceived(true_mouth.position + r_true * scenario.mouth_error, true_mouth.orientation);
  perception::CameraModel camera;
  camera.pose = perceived * Pose(Vector3(0.0, 0.0, camera.nominal_depth),
                                 from_axes(Vector3::UnitX(), -Vector3::UnitY(), -Vector3::UnitZ()));
  const Pose mouth_est = perception::mouth_center_from_keypoints(
      perception::synth_keypoints(perceived, camera, false), camera);

  const fsm::PlanParams& plan_params = scenario.plan;
  const Pose pre = perception::target_pose(mouth_est, rep.offsets, plan_params.entry_depth, plan_params.pitch);
  const fsm::TrajectoryPlan plan = scenario.mode == TransferMode::FixedPose
                                       ? fixed_pose_plan(pre, mouth_est, plan_params)
                                       : fsm::build_transfer_plan(pre, mouth_est, plan_params);
  const Matrix3 r_est = mouth_est.rotation();

  TickWorld world;
  world.mouth = scenario.mouth;
  world.plan = &plan;
  world.gains = scenario.gains;
  world.impedance = scenario.impedance;
  world.exit_axis = r_est.col(2);
  world.safety_limit = scenario.safety_limit;
  world.safety_rule = scenario.safety_rule;

  VirtualRobotState state;
  state.pose = plan.waypoints().front().pose;
  state.mass << Vector3::Constant(scenario.mass), Vector3::Constant(scenario.inertia);
  ControllerState ctrl;
  ctrl.windup_limit = scenario.windup_limit;
  fsm::FsmContext fsm_ctx;
  fsm_ctx.detector.threshold = scenario.bite_threshold;
  fsm_ctx.detector.timeout = scenario.bite_timeout;
  fsm_ctx.detector.axis = r_est.col(1);

  std::optional<kinematics::ChainModel> chain;
  kinematics::IkParams ik;
  ik.max_iter = 50;
  if (scenario.joint_tracking && !scenario.chain_file.empty()) {
    chain = kinematics::load_chain(scenario.chain_file);
    kinematics::IkParams first = ik;
    first.max_iter = 500;
    auto res = kinematics::ik_damped_least_squares(*chain, state.pose, ready_config(*chain), first);
    Rng rng(derive_seed(scenario.seed, 3));
    for (int attempt = 0; attempt < 20 && !res.converged; ++attempt) {
      Eigen::VectorXd q(static_cast<Eigen::Index>(chain->dof()));
      for (std::size_t i = 0; i < chain->dof(); ++i) {
        const auto& lim = chain->joints()[i].limits;
        q[static_cast<Eigen::Index>(i)] = rng.uniform(lim.min, lim.max);
      }
      res = kinematics::ik_damped_least_squares(*chain, state.pose, chain->make_config(q), first);
    }
    if (res.converged) {
      state.joints = res.q;
      state.joints_valid = true;
      rep.joint_tracking = true;
    }
  }

  const double horizon = plan.duration() + scenario.bite_timeout + scenario.abort_hold + 1.0;
  const auto max_ticks = static_cast<std::size_t>(std::llround(horizon / dt));
  const std::vector<Vector3> head = human::head_trace(
      scenario.perturbation, scenario.perturbation_params, horizon, derive_seed(scenario.seed, 2));
  const auto hold_ticks = static_cast<std::size_t>(std::llround(scenario.abort_hold / dt));

  std::optional<Pose> prev_setpoint;
  std::optional<double> wait_start;
  double anchor_z = 0.0;
  double entry_start = 0.0, exit_start = 0.0;
  bool on_fork = true, in_teeth = false, dropped = false, released = false, slipped = false;
  bool aborted_in_wait = false;
  std::optional<std::size_t> abort_tick;
  double deviation_sum = 0.0;
  rep.log.reserve(max_ticks + 1);

  for (std::size_t k = 0; k <= max_ticks; ++k) {
    const double t = static_cast<double>(k) * dt;
    world.clock = t;
    const TransferPhase phase = fsm_ctx.phase;

    // Head: scripted perturbation plus, in FixedPose, the lean onto the fork.
    Vector3 disp = head[std::min(k, head.size() - 1)];
    if (scenario.mode == TransferMode::FixedPose) {
      const double d = scenario.lean_distance;
      if (phase == TransferPhase::Entry) {
        disp.z() += d * fsm::smooth_step(std::min(1.0, (t - entry_start) / plan_params.entry_duration));
      } else if (phase == TransferPhase::BiteWait) {
        disp.z() += d;
      } else if (phase == TransferPhase::Exit) {
        disp.z() += d * (1.0 - fsm::smooth_step(std::min(1.0, (t - exit_start) / plan_params.exit_duration)));
      }
    }
    world.mouth.center = Pose(true_mouth.position + r_true * disp, true_mouth.orientation);

    // Forces on the fork other than contact.
    Wrench ext;
    for (const ForcePulse& p : scenario.disturbances) {
      if (t >= p.start && t < p.end) ext.force += p.force;
    }
    if (k < scenario.force_trace.size()) ext.force += scenario.force_trace[k];
    const bool biting = phase == TransferPhase::BiteWait || in_teeth;
    if (biting && wait_start && !released && !slipped) {
      ext = ext + world_wrench(r_true, human::bite_force(scenario.bite, t - *wait_start));
    }
    double pull = 0.0;
    if (in_teeth) {
      const Vector3 local = r_true.transpose() * (state.pose.position - world.mouth.center.position);
      pull = scenario.tether_stiffness * std::max(0.0, local.z() - anchor_z);
      ext.force -= pull * r_true.col(2);
      rep.peak_pull = std::max(rep.peak_pull, pull);
    }
    world.external = ext;

    const TickResult tick = simulate_tick(state, ctrl, fsm_ctx, world, prev_setpoint);

    for (const fsm::Event& e : tick.events) {
      if (e.to == TransferPhase::Entry) entry_start = e.t;
      if (e.to == TransferPhase::BiteWait) wait_start = e.t;
      if (e.to == TransferPhase::Exit) exit_start = e.t;
      if (e.name == "bite") {
        rep.bite_time = e.t;
        in_teeth = on_fork;
        const Vector3 local = r_true.transpose() * (state.pose.position - world.mouth.center.position);
        anchor_z = local.z();
      }
      if (e.name == "timeout") rep.timed_out = true;
      if (e.to == TransferPhase::Aborted) {
        rep.safety_stop = true;
        aborted_in_wait = e.from == TransferPhase::BiteWait;
      }
      rep.events.push_back(e);
    }

    // Food bookkeeping: contact shear before the bite knocks the food off;
    // afterwards the teeth either pull it off the tines or lose their grip.
    const double shear = tick.contact.force.norm();
    rep.peak_contact = std::max(rep.peak_contact, shear);
    if (on_fork && !rep.bite_time &&
        human::food_attachment(scenario.food, shear) == human::Attachment::Detached) {
      on_fork = false;
      dropped = true;
      rep.drop_time = t;
    }
    if (in_teeth && on_fork) {
      if (human::food_attachment(scenario.food, pull) == human::Attachment::Detached) {
        on_fork = false;
        in_teeth = false;
        released = true;
        rep.release_time = t;
      } else if (pull > scenario.food.bite_release_force) {
        in_teeth = false;
        slipped = true;
      }
    }

    rep.peak_force = std::max(rep.peak_force, max_abs_component(tick.record.f_m));
    rep.max_deviation = std::max(rep.max_deviation, tick.record.deviation);
    deviation_sum += tick.record.deviation;
    rep.log.push_back(tick.record);

    if (chain && rep.joint_tracking && !tick.ctrl.aborted) {
      const auto res = kinematics::ik_damped_least_squares(*chain, tick.state.pose, state.joints, ik);
      if (res.converged) {
        for (std::size_t i = 0; i < kinematics::kArmDof; ++i) {
          rep.arm_joint_travel += std::abs(res.q[i] - state.joints[i]);
        }
        state.joints = res.q;
      } else {
        ++rep.joint_ik_failures;
      }
    }

    const kinematics::JointConfig joints = state.joints;
    state = tick.state;
    state.joints = joints;
    ctrl = tick.ctrl;
    fsm_ctx = tick.fsm;
    prev_setpoint = tick.setpoint;

    if (fsm_ctx.phase == TransferPhase::Done) break;
    if (fsm_ctx.phase == TransferPhase::Aborted) {
      if (!abort_tick) abort_tick = k;
      if (k - *abort_tick >= hold_ticks) break;
    }
  }

  rep.food_slipped = slipped;
  rep.mean_deviation = deviation_sum / static_cast<double>(rep.log.size());
  const Vector3 e = scenario.mouth_error;
  const bool imprecise = std::hypot(e.x(), e.y()) > 0.5 * scenario.mouth.aperture;
  rep.outcome = classify(imprecise, dropped, rep.timed_out, aborted_in_wait, slipped, released,
                         rep.safety_stop);
  return rep;
}

std::string report_to_json(const TrialReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["preset"] = r.preset;
  j["mode"] = to_string(r.mode);
  j["outcome"] = to_string(r.outcome);
  j["bite_time_s"] = r.bite_time ? json(*r.bite_time) : json(nullptr);
  j["timed_out"] = r.timed_out;
  j["safety_stop"] = r.safety_stop;
  j["drop_time_s"] = r.drop_time ? json(*r.drop_time) : json(nullptr);
  j["release_time_s"] = r.release_time ? json(*r.release_time) : json(nullptr);
  j["food_slipped"] = r.food_slipped;
  j["offsets_mm"] = {{"dx", r.offsets.dx}, {"dy", r.offsets.dy}};
  j["peak_force_n"] = r.peak_force;
  j["peak_contact_n"] = r.peak_contact;
  j["peak_pull_n"] = r.peak_pull;
  j["mean_deviation_m"] = r.mean_deviation;
  j["max_deviation_m"] = r.max_deviation;
  j["ticks"] = r.log.size();
  j["duration_s"] = r.log.empty() ? 0.0 : r.log.back().t;
  j["joint_tracking"] = r.joint_tracking;
  j["joint_ik_failures"] = r.joint_ik_failures;
  j["arm_joint_travel_rad"] = r.arm_joint_travel;
  json events = json::array();
  for (const fsm::Event& e : r.events) {
    events.push_back({{"t", e.t},
                      {"phase_from", to_string(e.from)},
                      {"phase_to", to_string(e.to)},
                      {"event", e.name},
                      {"f_y", e.f_y}});
  }
  j["events"] = std::move(events);
  return j.dump(2) + "\n";
}

void write_log(const TrialReport& report, const std::filesystem::path& path) {
  std::string buf(kLogMagic, 4);
  auto put = [&buf](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  const std::uint64_t count = report.log.size();
  put(&kLogVersion, sizeof kLogVersion);
  put(&report.seed, sizeof report.seed);
  put(&count, sizeof count);
  for (const LogRecord& r : report.log) {
    double row[kRecordDoubles];
    std::size_t n = 0;
    row[n++] = r.t;
    for (double v : r.pose.to_array()) row[n++] = v;
    for (int k = 0; k < 3; ++k) row[n++] = r.f_m.force[k];
    for (int k = 0; k < 3; ++k) row[n++] = r.f_m.torque[k];
    row[n++] = static_cast<double>(static_cast<int>(r.phase));
    for (double v : r.setpoint.to_array()) row[n++] = v;
    row[n++] = r.deviation;
    put(row, sizeof row);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<LogRecord> read_log(const std::filesystem::path& path, std::uint64_t* seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::ConfigError("cannot open log " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = 4 + sizeof(std::uint32_t) + 2 * sizeof(std::uint64_t);
  if (buf.size() < header || std::memcmp(buf.data(), kLogMagic, 4) != 0) {
    throw io::ConfigError(path.string() + " is not a trial log");
  }
  std::uint32_t version = 0;
  std::uint64_t log_seed = 0, count = 0;
  std::memcpy(&version, buf.data() + 4, sizeof version);
  std::memcpy(&log_seed, buf.data() + 8, sizeof log_seed);
  std::memcpy(&count, buf.data() + 16, sizeof count);
  if (version != kLogVersion) throw io::ConfigError("unsupported log version");
  if (buf.size() != header + count * kRecordDoubles * sizeof(double)) {
    throw io::ConfigError(path.string() + " is truncated");
  }
  if (seed) *seed = log_seed;
  std::vector<LogRecord> log(count);
  const char* p = buf.data() + header;
  // Stored quaternions are restored verbatim so replays are bit-identical.
  auto exact_pose = [](const std::array<double, 7>& a) {
    Pose pose;
    pose.position = Vector3(a[0], a[1], a[2]);
    pose.orientation = Quaternion(a[3], a[4], a[5], a[6]);
    return pose;
  };
  for (LogRecord& r : log) {
    double row[kRecordDoubles];
    std::memcpy(row, p, sizeof row);
    p += sizeof row;
    std::size_t n = 0;
    r.t = row[n++];
    std::array<double, 7> a{};
    for (double& v : a) v = row[n++];
    r.pose = exact_pose(a);
    for (int k = 0; k < 3; ++k) r.f_m.force[k] = row[n++];
    for (int k = 0; k < 3; ++k) r.f_m.torque[k] = row[n++];
    const double phase = row[n++];
    if (!(phase >= 0.0 && phase <= static_cast<double>(TransferPhase::Aborted))) {
      throw io::ConfigError("corrupt phase in log");
    }
    r.phase = static_cast<TransferPhase>(static_cast<int>(phase));
    for (double& v : a) v = row[n++];
    r.setpoint = exact_pose(a);
    r.deviation = row[n++];
  }
  return log;
}

std::string trajectory_csv(const std::vector<LogRecord>& log) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  out.reserve(log.size() * 320);
  auto add = [&out](double v) {
    io::append_double(out, v);
    out += ',';
  };
  for (const LogRecord& r : log) {
    add(r.t);
    for (double v : r.pose.to_array()) add(v);
    for (int k = 0; k < 3; ++k) add(r.f_m.force[k]);
    for (int k = 0; k < 3; ++k) add(r.f_m.torque[k]);
    out += to_string(r.phase);
    out += ',';
    for (double v : r.setpoint.to_array()) add(v);
    io::append_double(out, r.deviation);
    out += '\n';
  }
  return out;
}

void export_trajectory(const std::vector<LogRecord>& log, const std::filesystem::path& path) {
  io::write_text_file(path, trajectory_csv(log));
}

SuiteConfig parse_suite(const std::string& json_text, const std::filesystem::path& base_dir) {
  return config_guard([&] {
    const json j = scenario_json(json_text, base_dir);
    SuiteConfig suite;
    suite.name = j.value("name", suite.name);
    if (!j.contains("seed")) throw io::ConfigError("suite needs an explicit seed");
    suite.seed = j.at("seed").get<std::uint64_t>();
    for (const json& e : j.at("entries")) {
      const std::filesystem::path file = resolve(base_dir, e.at("scenario").get<std::string>());
      json sj = scenario_json(io::read_text_file(file), file);
      if (e.contains("overrides")) sj.merge_patch(e["overrides"]);
      SuiteEntry entry;
      entry.scenario = scenario_from_json(sj, file.parent_path());
      entry.scenario.validate();
      entry.method = e.value("method", entry.scenario.preset);
      entry.repetitions = e.value("repetitions", std::size_t{1});
      suite.entries.push_back(std::move(entry));
    }
    if (suite.entries.empty()) throw io::ConfigError("suite has no entries");
    return suite;
  });
}

SuiteConfig load_suite(const std::filesystem::path& path) {
  return parse_suite(io::read_text_file(path), path.parent_path());
}

double MethodTally::success_rate() const {
  if (trials == 0) return 0.0;
  const auto it = counts.find(Outcome::Success);
  return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(trials);
}

SuiteReport run_suite(const SuiteConfig& suite, unsigned threads) {
  if (suite.entries.empty()) throw std::invalid_argument("suite has no entries");
  std::vector<std::pair<const SuiteEntry*, SuiteTrial>> jobs;
  for (const SuiteEntry& e : suite.entries) {
    for (std::size_t r = 0; r < e.repetitions; ++r) {
      SuiteTrial t;
      t.index = jobs.size();
      t.method = e.method;
      t.scenario = e.scenario.name;
      t.seed = derive_seed(suite.seed, t.index);
      t.refuse = e.scenario.bite.refuse;
      jobs.emplace_back(&e, t);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Scenario s = jobs[i].first->scenario;
      s.seed = jobs[i].second.seed;
      jobs[i].second.outcome = run_trial(s).outcome;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SuiteReport rep;
  rep.name = suite.name;
  rep.seed = suite.seed;
  for (auto& [entry, trial] : jobs) {
    MethodTally& m = rep.methods[trial.method];
    if (m.counts.empty()) {
      for (Outcome o : kAllOutcomes) m.counts[o] = 0;
    }
    ++m.trials;
    ++m.counts[trial.outcome];
    ++rep.total;
    if (trial.outcome == Outcome::Success) {
      ++rep.successes;
    } else {
      ++rep.failures;
    }
    rep.trials.push_back(trial);
  }
  return rep;
}

std::string suite_to_json(const SuiteReport& r) {
  json j;
  j["name"] = r.name;
  j["seed"] = r.seed;
  j["total"] = r.total;
  j["successes"] = r.successes;
  j["failures"] = r.failures;
  json methods = json::object();
  for (const auto& [name, m] : r.methods) {
    json counts = json::object();
    for (const auto& [o, n] : m.counts) counts[std::string(to_string(o))] = n;
    methods[name] = {{"trials", m.trials}, {"success_rate", m.success_rate()}, {"counts", counts}};
  }
  j["methods"] = std::move(methods);
  json trials = json::array();
  for (const SuiteTrial& t : r.trials) {
    trials.push_back({{"index", t.index},
                      {"method", t.method},
                      {"scenario", t.scenario},
                      {"seed", t.seed},
                      {"refuse", t.refuse},
                      {"outcome", to_string(t.outcome)}});
  }
  j["trials"] = std::move(trials);
  return j.dump(2) + "\n";
}

std::string suite_table_csv(const SuiteReport& r) {
  std::string out = "method,trials";
  for (Outcome o : kAllOutcomes) {
    out += ',';
    out += to_string(o);
  }
  out += ",success_rate\n";
  for (const auto& [name, m] : r.methods) {
    out += name + ',' + std::to_string(m.trials);
    for (Outcome o : kAllOutcomes) out += ',' + std::to_string(m.counts.at(o));
    out += ',';
    io::append_double(out, m.success_rate());
    out += '\n';
  }
  return out;
}

}  // namespace bite::harness
