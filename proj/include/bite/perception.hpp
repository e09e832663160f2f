#pragma once

#include "bite/geometry.hpp"
#include "bite/human_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bite::perception {

/// Raised for scans or landmark sets that cannot produce a safe target.
class PerceptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Points in millimeters, mouth axes, origin at the fork tip.
struct PointCloud {
  std::vector<Vector3> points;
  double resolution_mm = 0.1;

  bool empty() const { return points.empty(); }
};

struct Aabb {
  Vector3 min = Vector3::Zero();
  Vector3 max = Vector3::Zero();
};

struct FoodOffsets {
  double dx = 0.0;  // mm along the lips
  double dy = 0.0;  // mm vertical

  static constexpr double kSanityBoundMm = 50.0;
  bool within_bounds() const;
};

/// Which y extent drives the vertical offset.
enum class DyRule { TopExtent, MinimumY };

struct ScanParams {
  double resolution_mm = 0.1;
  double depth_noise_mm = 0.0;  // Gaussian noise on the depth (z) of each return
};

/// Orthographic depth scan of the food looking along +z of the mouth frame
/// (the camera faces the tines). Rays sit on the grid (i r, j r). The food
/// preset is placed by `food_pose` (meters) relative to the fork tip.
PointCloud synth_depth_scan(const human::FoodPreset& food, const Pose& food_pose,
                            const ScanParams& params, std::uint64_t seed);

Aabb food_bounding_box(const PointCloud& cloud);

FoodOffsets compute_offsets(const Aabb& bbox, DyRule rule = DyRule::TopExtent);

/// Right-handed orthonormal mouth axes: x along the lips to the user's
/// left, y up, z out of the mouth.
void validate_mouth_frame(const Matrix3& axes, double tolerance = 1e-9);

/// Pre-mouth target: mouth center shifted by the offsets in the face plane,
/// carrying the transfer orientation.
Pose target_pose(const Pose& mouth_center, const FoodOffsets& offsets, double entry_depth,
                 double pitch);

struct Keypoint {
  std::string label;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  std::optional<Vector3> point;  // camera frame, meters
};

/// Pinhole camera; camera x right, y down, z forward.
struct CameraModel {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  double nominal_depth = 0.5;  // m, used for 2D landmarks
  Pose pose;  // camera frame in the world
};

/// Labels: mouth_corner_left, mouth_corner_right, inner_lip_upper,
/// inner_lip_lower (required), further inner_lip_* optional.
Pose mouth_center_from_keypoints(const std::vector<Keypoint>& keypoints,
                                 const CameraModel& camera);

/// Projects a mouth-frame landmark set through the camera (for synthetic
/// sources and round-trip checks).
std::vector<Keypoint> synth_keypoints(const Pose& mouth, const CameraModel& camera,
                                      bool with_depth, double half_width = 0.025,
                                      double half_opening = 0.008);

std::vector<Keypoint> parse_keypoints(const std::string& json_text);
std::vector<Keypoint> load_keypoints(const std::filesystem::path& path);

void write_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_cloud_csv(const std::filesystem::path& path);
void write_cloud_binary(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_cloud_binary(const std::filesystem::path& path);
/// Dispatches on the file's magic bytes.
PointCloud read_cloud(const std::filesystem::path& path);

}  // namespace bite::perception
