#include "bite/human_sim.hpp"

#include "bite/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bite::human {

namespace {

using nlohmann::json;

Vector3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& name, const std::array<std::string_view, N>& names,
                const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<Enum>(i);
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": " + name);
}

constexpr std::array<std::string_view, 3> kShapes = {"round", "cube_cylinder", "irregular"};
constexpr std::array<std::string_view, 3> kSizes = {"small", "medium", "large"};
constexpr std::array<std::string_view, 3> kDeform = {"fragile", "robust", "rigid"};
constexpr std::array<std::string_view, 3> kKinds = {"box", "cylinder", "sphere"};
constexpr std::array<std::string_view, 3> kPerturb = {"none", "sinusoid", "random_walk"};

Primitive parse_primitive(const json& j) {
  Primitive p;
  p.kind = parse_enum<PrimitiveKind>(j.at("type").get<std::string>(), kKinds, "primitive");
  p.center_mm = j.contains("center_mm") ? vec3(j["center_mm"]) : Vector3::Zero();
  switch (p.kind) {
    case PrimitiveKind::Box: p.size_mm = vec3(j.at("size_mm")); break;
    case PrimitiveKind::Cylinder: {
      const double d = j.at("diameter_mm").get<double>();
      p.size_mm = Vector3(j.at("length_mm").get<double>(), d, d);
      break;
    }
    case PrimitiveKind::Sphere: {
      const double d = j.at("diameter_mm").get<double>();
      p.size_mm = Vector3(d, d, d);
      break;
    }
  }
  if (j.contains("rotation_deg")) {
    const Vector3 r = vec3(j["rotation_deg"]) * (std::numbers::pi / 180.0);
    p.orientation = exp_map(r);
  }
  return p;
}

double gaussian_increment(Rng& rng, double scale) { return rng.normal() * scale; }

}  // namespace

std::string_view to_string(ShapeClass c) { return kShapes[static_cast<std::size_t>(c)]; }
std::string_view to_string(SizeClass c) { return kSizes[static_cast<std::size_t>(c)]; }
std::string_view to_string(Deformability c) { return kDeform[static_cast<std::size_t>(c)]; }
std::string_view to_string(PerturbationKind k) { return kPerturb[static_cast<std::size_t>(k)]; }

PerturbationKind parse_perturbation(const std::string& name) {
  std::string key = name;
  std::replace(key.begin(), key.end(), '-', '_');
  return parse_enum<PerturbationKind>(key, kPerturb, "perturbation");
}

double Primitive::bounding_radius() const {
  switch (kind) {
    case PrimitiveKind::Box: return 0.5 * size_mm.norm();
    case PrimitiveKind::Cylinder: return 0.5 * std::hypot(size_mm.x(), size_mm.y());
    case PrimitiveKind::Sphere: return 0.5 * size_mm.x();
  }
  return 0.0;
}

bool FoodPreset::empty() const {
  return std::all_of(parts.begin(), parts.end(),
                     [](const Primitive& p) { return (p.size_mm.array() <= 0.0).any(); });
}

void FoodPreset::validate() const {
  if (name.empty()) throw std::invalid_argument("food preset needs a name");
  if (parts.empty()) throw std::invalid_argument("food preset " + name + " has no geometry");
  for (const Primitive& p : parts) {
    if (!p.size_mm.allFinite() || (p.size_mm.array() <= 0.0).any()) {
      throw std::invalid_argument("food preset " + name + " has non-positive dimensions");
    }
  }
  if (!(detachment_force > 0.0) || !(bite_release_force > 0.0)) {
    throw std::invalid_argument("food preset " + name + " needs positive forces");
  }
}

FoodPreset cube_food(double edge_mm, const Vector3& center_mm) {
  FoodPreset f;
  f.name = "cube";
  f.parts.push_back({PrimitiveKind::Box, Vector3::Constant(edge_mm), center_mm,
                     Quaternion::Identity()});
  f.shape = ShapeClass::CubeCylinder;
  f.size = SizeClass::Medium;
  return f;
}

std::vector<FoodPreset> parse_food_presets(const std::string& json_text) {
  const json doc = json::parse(json_text);
  const json& list = doc.is_array() ? doc : doc.at("foods");
  std::vector<FoodPreset> out;
  for (const json& j : list) {
    FoodPreset f;
    f.name = j.at("name").get<std::string>();
    const json& geo = j.at("geometry");
    if (geo.at("type").get<std::string>() == "composite") {
      for (const json& part : geo.at("parts")) f.parts.push_back(parse_primitive(part));
    } else {
      f.parts.push_back(parse_primitive(geo));
    }
    f.shape = parse_enum<ShapeClass>(j.at("shape").get<std::string>(), kShapes, "shape class");
    f.size = parse_enum<SizeClass>(j.at("size").get<std::string>(), kSizes, "size class");
    f.deformability = parse_enum<Deformability>(j.at("deformability").get<std::string>(),
                                                kDeform, "deformability class");
    f.detachment_force = j.at("detachment_force_n").get<double>();
    f.bite_release_force = j.value("bite_release_force_n", 4.0);
    f.validate();
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<FoodPreset> load_food_presets(const std::filesystem::path& path) {
  return parse_food_presets(io::read_text_file(path));
}

const FoodPreset& find_preset(const std::vector<FoodPreset>& presets, const std::string& name) {
  for (const FoodPreset& f : presets) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument("unknown food preset: " + name);
}

std::filesystem::path default_food_preset_file() {
  return std::filesystem::path(BITE_DEFAULT_CONFIG_DIR) / "food_presets.json";
}

void MouthModel::validate() const {
  if (!(aperture > 0.0)) throw std::invalid_argument("mouth aperture must be positive");
  if (!(half_width > 0.0)) throw std::invalid_argument("mouth width must be positive");
  if (stiffness < 0.0 || damping < 0.0) {
    throw std::invalid_argument("contact stiffness and damping must be non-negative");
  }
}

Wrench contact_force(const Pose& fork_tip, const Vector6& fork_velocity, const MouthModel& mouth) {
  const Matrix3 r = mouth.center.rotation();
  const Vector3 p = r.transpose() * (fork_tip.position - mouth.center.position);
  const Vector3 v = r.transpose() * fork_velocity.head<3>();
  Wrench w;
  if (p.z() >= 0.0) return w;

  // (axis, outward normal sign, boundary) for each wall.
  struct Wall {
    int axis;
    double sign;
    double limit;
  };
  const double h = 0.5 * mouth.aperture;
  const Wall walls[] = {{1, 1.0, h}, {1, -1.0, h}, {0, 1.0, mouth.half_width},
                        {0, -1.0, mouth.half_width}};
  Vector3 local = Vector3::Zero();
  for (const Wall& wall : walls) {
    const double depth = wall.sign * p[wall.axis] - wall.limit;
    if (depth <= 0.0) continue;
    const double rate = wall.sign * v[wall.axis];
    const double normal = std::max(0.0, mouth.stiffness * depth + mouth.damping * rate);
    local[wall.axis] -= wall.sign * normal;
  }
  w.force = r * local;
  return w;
}

void BiteScript::validate() const {
  if (!(peak_force >= 0.0)) throw std::invalid_argument("bite peak force must be non-negative");
  if (ramp < 0.0 || t_bite < 0.0) throw std::invalid_argument("bite timing must be non-negative");
}

Wrench bite_force(const BiteScript& script, double t_in_wait) {
  Wrench w;
  if (script.refuse || t_in_wait < script.t_bite) return w;
  double magnitude = script.peak_force;
  if (script.ramp > 0.0) {
    magnitude *= std::min(1.0, (t_in_wait - script.t_bite) / script.ramp);
  }
  w.force = Vector3(0.0, -magnitude, 0.0);
  return w;
}

Attachment food_attachment(const FoodPreset& food, double applied_shear, Attachment current) {
  if (applied_shear < 0.0) throw std::invalid_argument("shear must be non-negative");
  if (current == Attachment::Detached) return current;
  return applied_shear > food.detachment_force ? Attachment::Detached : Attachment::Attached;
}

void PerturbationParams::validate() const {
  if (!(amplitude >= 0.0) || amplitude > 0.02 + 1e-12) {
    throw std::invalid_argument("head perturbation amplitude must be within 20 mm");
  }
  if (!(period > 0.0) || !(dt > 0.0) || step_std < 0.0) {
    throw std::invalid_argument("invalid head perturbation timing");
  }
}

std::vector<Vector3> head_trace(PerturbationKind kind, const PerturbationParams& params,
                                double duration, std::uint64_t seed) {
  params.validate();
  const auto n = static_cast<std::size_t>(std::llround(duration / params.dt)) + 1;
  std::vector<Vector3> trace(n, Vector3::Zero());
  if (kind == PerturbationKind::Sinusoid) {
    const Vector3 dir = params.direction.normalized();
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * params.dt;
      trace[k] = params.amplitude * std::sin(2.0 * std::numbers::pi * t / params.period) * dir;
    }
  } else if (kind == PerturbationKind::RandomWalk) {
    Rng rng(seed);
    const double scale = params.step_std * std::sqrt(params.dt);
    Vector3 x = Vector3::Zero();
    for (std::size_t k = 1; k < n; ++k) {
      x += Vector3(gaussian_increment(rng, scale), gaussian_increment(rng, scale),
                   gaussian_increment(rng, scale));
      const double norm = x.norm();
      if (norm > params.amplitude) x *= params.amplitude / norm;
      trace[k] = x;
    }
  }
  return trace;
}

Pose head_perturbation(PerturbationKind kind, const PerturbationParams& params, double t,
                       std::uint64_t seed) {
  params.validate();
  if (kind == PerturbationKind::None) return Pose::identity();
  if (kind == PerturbationKind::Sinusoid) {
    const Vector3 dir = params.direction.normalized();
    return Pose(params.amplitude * std::sin(2.0 * std::numbers::pi * t / params.period) * dir);
  }
  const std::vector<Vector3> trace = head_trace(kind, params, t, seed);
  return Pose(trace.back());
}

}  // namespace bite::human
