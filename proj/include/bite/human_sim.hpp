#pragma once

#include "bite/controller.hpp"
#include "bite/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bite::human {

using controller::Wrench;

enum class ShapeClass { Round, CubeCylinder, Irregular };
enum class SizeClass { Small, Medium, Large };
enum class Deformability { Fragile, Robust, Rigid };
enum class PrimitiveKind { Box, Cylinder, Sphere };

std::string_view to_string(ShapeClass c);
std::string_view to_string(SizeClass c);
std::string_view to_string(Deformability c);

/// Solid in the fork-tip frame (mouth axes), millimeters.
/// Box: full extents. Cylinder: (length along local x, diameter, -).
/// Sphere: (diameter, -, -).
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Vector3 size_mm = Vector3::Zero();
  Vector3 center_mm = Vector3::Zero();
  Quaternion orientation = Quaternion::Identity();

  /// Radius of a sphere around center_mm that contains the solid.
  double bounding_radius() const;
};

struct FoodPreset {
  std::string name;
  std::vector<Primitive> parts;  // more than one part: composite
  ShapeClass shape = ShapeClass::Round;
  SizeClass size = SizeClass::Small;
  Deformability deformability = Deformability::Robust;
  double detachment_force = 1.5;    // N of shear to pull the food off the tines
  double bite_release_force = 4.0;  // N the teeth can hold before the food slips out

  bool composite() const { return parts.size() > 1; }
  bool empty() const;
  void validate() const;
};

/// Centered cube on the fork tip, robust; used by tests and examples.
FoodPreset cube_food(double edge_mm, const Vector3& center_mm = Vector3::Zero());

std::vector<FoodPreset> parse_food_presets(const std::string& json_text);
std::vector<FoodPreset> load_food_presets(const std::filesystem::path& path);
const FoodPreset& find_preset(const std::vector<FoodPreset>& presets, const std::string& name);
std::filesystem::path default_food_preset_file();

/// Mouth opening as seen in the mouth frame: teeth planes at y = +-aperture/2,
/// lateral walls at x = +-half_width, cavity for z < 0.
struct MouthModel {
  Pose center;  // mouth frame in the world
  double aperture = 0.030;
  double half_width = 0.025;
  double stiffness = 1000.0;
  double damping = 0.0;

  void validate() const;
};

/// Penalty force on the fork tip (world frame). Zero outside the cavity.
/// `fork_velocity` is the world twist (linear first).
Wrench contact_force(const Pose& fork_tip, const Vector6& fork_velocity, const MouthModel& mouth);

struct BiteScript {
  double t_bite = 0.5;  // s after BiteWait begins
  double peak_force = 0.5;  // N along mouth -y
  double ramp = 0.0;  // s
  bool refuse = false;

  void validate() const;
};

/// Bite force on the fork in the mouth frame.
Wrench bite_force(const BiteScript& script, double t_in_wait);

enum class Attachment { Attached, Detached };

/// Latching: detached stays detached.
Attachment food_attachment(const FoodPreset& food, double applied_shear,
                           Attachment current = Attachment::Attached);

enum class PerturbationKind { None, Sinusoid, RandomWalk };

PerturbationKind parse_perturbation(const std::string& name);
std::string_view to_string(PerturbationKind kind);

struct PerturbationParams {
  double amplitude = 0.0;  // m, at most 0.02
  double period = 2.0;  // s, sinusoid
  Vector3 direction = Vector3::UnitY();  // mouth frame, sinusoid
  double step_std = 0.002;  // m / sqrt(s), random walk
  double dt = 0.001;

  void validate() const;
};

/// Displacement of the mouth center at time t, expressed in the mouth frame.
/// Random walks are clamped to the amplitude ball.
Pose head_perturbation(PerturbationKind kind, const PerturbationParams& params, double t,
                       std::uint64_t seed);

/// Precomputed displacement per tick, identical to head_perturbation at
/// t = k * dt.
std::vector<Vector3> head_trace(PerturbationKind kind, const PerturbationParams& params,
                                double duration, std::uint64_t seed);

}  // namespace bite::human
