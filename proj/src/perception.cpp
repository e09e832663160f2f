#include "bite/perception.hpp"

#include "bite/io.hpp"
#include "bite/transfer_fsm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace bite::perception {

namespace {

using human::Primitive;
using human::PrimitiveKind;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRayStart = -1000.0;  // mm, camera plane

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool empty() const { return lo > hi; }
};

// Parameter range of o + s d inside the slab |x_axis| <= half.
Interval slab(double o, double d, double half) {
  if (std::abs(d) < 1e-15) return std::abs(o) <= half ? Interval{} : Interval{kInf, -kInf};
  const double a = (-half - o) / d;
  const double b = (half - o) / d;
  return {std::min(a, b), std::max(a, b)};
}

Interval intersect(Interval a, Interval b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }

// Quadratic |o_perp + s d_perp|^2 <= r^2 over the given two components.
Interval disc(double o1, double o2, double d1, double d2, double r) {
  const double a = d1 * d1 + d2 * d2;
  const double c = o1 * o1 + o2 * o2 - r * r;
  if (a < 1e-15) return c <= 0.0 ? Interval{} : Interval{kInf, -kInf};
  const double b = o1 * d1 + o2 * d2;
  const double disc2 = b * b - a * c;
  if (disc2 < 0.0) return {kInf, -kInf};
  const double s = std::sqrt(disc2);
  return {(-b - s) / a, (-b + s) / a};
}

// Entry parameter of the ray into the primitive (local frame), or +inf.
double entry(const Primitive& p, const Vector3& o, const Vector3& d) {
  Interval in;
  switch (p.kind) {
    case PrimitiveKind::Box:
      in = intersect(intersect(slab(o.x(), d.x(), 0.5 * p.size_mm.x()),
                               slab(o.y(), d.y(), 0.5 * p.size_mm.y())),
                     slab(o.z(), d.z(), 0.5 * p.size_mm.z()));
      break;
    case PrimitiveKind::Cylinder:
      in = intersect(slab(o.x(), d.x(), 0.5 * p.size_mm.x()),
                     disc(o.y(), o.z(), d.y(), d.z(), 0.5 * p.size_mm.y()));
      break;
    case PrimitiveKind::Sphere: {
      const double r = 0.5 * p.size_mm.x();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc2 = b * b - c;
      in = disc2 < 0.0 ? Interval{kInf, -kInf}
                       : Interval{-b - std::sqrt(disc2), -b + std::sqrt(disc2)};
      break;
    }
  }
  if (in.empty() || in.hi < 0.0) return kInf;
  return std::max(in.lo, 0.0);
}

struct PlacedPart {
  Primitive prim;
  Matrix3 rot;  // local -> cloud frame
  Vector3 center;  // mm
};

constexpr char kBinaryMagic[4] = {'B', 'T', 'P', 'C'};
constexpr std::uint32_t kBinaryVersion = 1;

Vector3 keypoint_camera_point(const Keypoint& k, const CameraModel& cam) {
  if (k.point) return *k.point;
  const double z = cam.nominal_depth;
  return {(k.pixel.x() - cam.cx) / cam.fx * z, (k.pixel.y() - cam.cy) / cam.fy * z, z};
}

}  // namespace

bool FoodOffsets::within_bounds() const {
  return std::isfinite(dx) && std::isfinite(dy) && std::abs(dx) <= kSanityBoundMm &&
         std::abs(dy) <= kSanityBoundMm;
}

PointCloud synth_depth_scan(const human::FoodPreset& food, const Pose& food_pose,
                            const ScanParams& params, std::uint64_t seed) {
  if (!(params.resolution_mm > 0.0)) throw std::invalid_argument("scan resolution must be positive");
  PointCloud cloud;
  cloud.resolution_mm = params.resolution_mm;
  if (food.empty()) return cloud;

  const Matrix3 r_food = food_pose.rotation();
  std::vector<PlacedPart> parts;
  double x_lo = kInf, x_hi = -kInf, y_lo = kInf, y_hi = -kInf;
  for (const Primitive& p : food.parts) {
    if ((p.size_mm.array() <= 0.0).any()) continue;
    PlacedPart placed{p, r_food * p.orientation.toRotationMatrix(),
                      r_food * p.center_mm + 1000.0 * food_pose.position};
    const double rad = p.bounding_radius();
    x_lo = std::min(x_lo, placed.center.x() - rad);
    x_hi = std::max(x_hi, placed.center.x() + rad);
    y_lo = std::min(y_lo, placed.center.y() - rad);
    y_hi = std::max(y_hi, placed.center.y() + rad);
    parts.push_back(placed);
  }

  const double res = params.resolution_mm;
  const auto i_lo = static_cast<long>(std::floor(x_lo / res)) - 1;
  const auto i_hi = static_cast<long>(std::ceil(x_hi / res)) + 1;
  const auto j_lo = static_cast<long>(std::floor(y_lo / res)) - 1;
  const auto j_hi = static_cast<long>(std::ceil(y_hi / res)) + 1;
  const Vector3 dir = Vector3::UnitZ();
  Rng rng(seed);

  for (long j = j_lo; j <= j_hi; ++j) {
    for (long i = i_lo; i <= i_hi; ++i) {
      const double x = static_cast<double>(i) * res;
      const double y = static_cast<double>(j) * res;
      const Vector3 origin(x, y, kRayStart);
      double best = kInf;
      for (const PlacedPart& part : parts) {
        const Vector3 o = part.rot.transpose() * (origin - part.center);
        const Vector3 d = part.rot.transpose() * dir;
        best = std::min(best, entry(part.prim, o, d));
      }
      if (!std::isfinite(best)) continue;
      double z = kRayStart + best;
      if (params.depth_noise_mm > 0.0) z += params.depth_noise_mm * rng.normal();
      cloud.points.emplace_back(x, y, z);
    }
  }
  return cloud;
}

Aabb food_bounding_box(const PointCloud& cloud) {
  if (cloud.empty()) throw PerceptionError("empty point cloud: no food detected on the fork");
  Aabb box{cloud.points.front(), cloud.points.front()};
  for (const Vector3& p : cloud.points) {
    if (!p.allFinite()) throw PerceptionError("non-finite point in cloud");
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

FoodOffsets compute_offsets(const Aabb& bbox, DyRule rule) {
  if ((bbox.min.array() > bbox.max.array()).any()) throw std::invalid_argument("invalid bounding box");
  FoodOffsets o;
  // Adding 0.0 turns a negative zero into +0.
  o.dx = -(bbox.min.x() + bbox.max.x()) / 2.0 + 0.0;
  o.dy = (rule == DyRule::TopExtent ? -std::max(0.0, bbox.max.y()) : -bbox.min.y()) + 0.0;
  return o;
}

void validate_mouth_frame(const Matrix3& axes, double tolerance) {
  if (!axes.allFinite() ||
      (axes.transpose() * axes - Matrix3::Identity()).cwiseAbs().maxCoeff() > tolerance ||
      std::abs(axes.determinant() - 1.0) > tolerance) {
    throw PerceptionError("mouth frame is not a right-handed orthonormal triad");
  }
}

Pose target_pose(const Pose& mouth_center, const FoodOffsets& offsets, double entry_depth,
                 double pitch) {
  if (!(entry_depth > 0.0)) throw std::invalid_argument("entry depth must be positive");
  if (!offsets.within_bounds()) throw PerceptionError("food offsets exceed the 50 mm sanity bound");
  const Matrix3 r = mouth_center.rotation();
  const Vector3 p = mouth_center.position + r.col(0) * (offsets.dx / 1000.0) +
                    r.col(1) * (offsets.dy / 1000.0);
  return Pose(p, fsm::transfer_orientation(mouth_center, pitch));
}

Pose mouth_center_from_keypoints(const std::vector<Keypoint>& keypoints,
                                 const CameraModel& camera) {
  std::map<std::string, Vector3> world;
  for (const Keypoint& k : keypoints) world[k.label] = camera.pose * keypoint_camera_point(k, camera);
  for (const char* label :
       {"mouth_corner_left", "mouth_corner_right", "inner_lip_upper", "inner_lip_lower"}) {
    if (!world.count(label)) throw PerceptionError(std::string("missing landmark: ") + label);
  }
  Vector3 center = Vector3::Zero();
  int lips = 0;
  for (const auto& [label, p] : world) {
    if (label.rfind("inner_lip_", 0) == 0) {
      center += p;
      ++lips;
    }
  }
  center /= lips;

  const Vector3 across = world["mouth_corner_left"] - world["mouth_corner_right"];
  if (across.norm() < 1e-6) throw PerceptionError("degenerate landmarks: mouth corners coincide");
  const Vector3 x = across.normalized();
  const Vector3 vertical = world["inner_lip_upper"] - world["inner_lip_lower"];
  const Vector3 y_raw = vertical - vertical.dot(x) * x;
  if (y_raw.norm() < 1e-6) throw PerceptionError("degenerate landmarks: lips collinear with corners");
  const Vector3 y = y_raw.normalized();
  return Pose(center, from_axes(x, y, x.cross(y)));
}

std::vector<Keypoint> synth_keypoints(const Pose& mouth, const CameraModel& camera,
                                      bool with_depth, double half_width, double half_opening) {
  const std::pair<const char*, Vector3> local[] = {
      {"mouth_corner_left", Vector3(half_width, 0, 0)},
      {"mouth_corner_right", Vector3(-half_width, 0, 0)},
      {"inner_lip_upper", Vector3(0, half_opening, 0)},
      {"inner_lip_lower", Vector3(0, -half_opening, 0)},
      {"inner_lip_left", Vector3(0.6 * half_width, 0, 0)},
      {"inner_lip_right", Vector3(-0.6 * half_width, 0, 0)},
  };
  const Pose to_camera = camera.pose.inverse();
  std::vector<Keypoint> out;
  for (const auto& [label, p] : local) {
    const Vector3 c = to_camera * (mouth * p);
    Keypoint k;
    k.label = label;
    k.pixel = Eigen::Vector2d(camera.fx * c.x() / c.z() + camera.cx,
                              camera.fy * c.y() / c.z() + camera.cy);
    if (with_depth) k.point = c;
    out.push_back(k);
  }
  return out;
}

std::vector<Keypoint> parse_keypoints(const std::string& json_text) {
  const nlohmann::json doc = nlohmann::json::parse(json_text);
  const nlohmann::json& list = doc.is_array() ? doc : doc.at("keypoints");
  std::vector<Keypoint> out;
  for (const auto& j : list) {
    Keypoint k;
    k.label = j.at("label").get<std::string>();
    if (j.contains("x")) {
      k.point = Vector3(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>());
    } else {
      k.pixel = Eigen::Vector2d(j.at("u").get<double>(), j.at("v").get<double>());
    }
    out.push_back(k);
  }
  return out;
}

std::vector<Keypoint> load_keypoints(const std::filesystem::path& path) {
  return parse_keypoints(io::read_text_file(path));
}

void write_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string text = "# frame=mouth resolution_mm=" + io::format_double(cloud.resolution_mm) + "\n";
  for (const Vector3& p : cloud.points) {
    io::append_double(text, p.x());
    text += ',';
    io::append_double(text, p.y());
    text += ',';
    io::append_double(text, p.z());
    text += '\n';
  }
  io::write_text_file(path, text);
}

PointCloud read_cloud_csv(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  PointCloud cloud;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.front() != '#') throw io::ConfigError("point cloud CSV needs a '# frame=' header");
      header_seen = true;
      bool frame_ok = false;
      std::size_t p = 1;
      while (p < line.size()) {
        while (p < line.size() && line[p] == ' ') ++p;
        std::size_t q = line.find(' ', p);
        if (q == std::string_view::npos) q = line.size();
        const std::string_view tok = line.substr(p, q - p);
        const std::size_t eq = tok.find('=');
        if (eq != std::string_view::npos) {
          const std::string_view key = tok.substr(0, eq);
          const std::string_view val = tok.substr(eq + 1);
          if (key == "frame") {
            if (val != "mouth") throw io::ConfigError("point cloud frame must be 'mouth'");
            frame_ok = true;
          } else if (key == "resolution_mm") {
            cloud.resolution_mm = io::parse_double(val);
          }
        }
        p = q;
      }
      if (!frame_ok) throw io::ConfigError("point cloud header lacks frame=mouth");
      if (!(cloud.resolution_mm > 0.0)) throw io::ConfigError("point cloud resolution must be positive");
      continue;
    }
    if (line == "x,y,z") continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw io::ConfigError("point cloud row needs exactly three values");
    }
    cloud.points.emplace_back(io::parse_double(line.substr(0, c1)),
                              io::parse_double(line.substr(c1 + 1, c2 - c1 - 1)),
                              io::parse_double(line.substr(c2 + 1)));
  }
  if (!header_seen) throw io::ConfigError("point cloud CSV is empty");
  return cloud;
}

void write_cloud_binary(const PointCloud& cloud, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::string buf(kBinaryMagic, 4);
  auto put = [&buf](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  put(&kBinaryVersion, sizeof(kBinaryVersion));
  char frame[8] = "mouth";
  put(frame, sizeof(frame));
  put(&cloud.resolution_mm, sizeof(double));
  const std::uint64_t count = cloud.points.size();
  put(&count, sizeof(count));
  for (const Vector3& p : cloud.points) put(p.data(), 3 * sizeof(double));
  io::write_text_file(path, buf);
}

PointCloud read_cloud_binary(const std::filesystem::path& path) {
  const std::string buf = io::read_text_file(path);
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > buf.size()) throw io::ConfigError("truncated point cloud file");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, kBinaryMagic, 4) != 0) throw io::ConfigError("not a binary point cloud");
  std::uint32_t version = 0;
  take(&version, sizeof(version));
  if (version != kBinaryVersion) throw io::ConfigError("unsupported point cloud version");
  char frame[8];
  take(frame, sizeof(frame));
  if (std::string(frame, strnlen(frame, sizeof(frame))) != "mouth") {
    throw io::ConfigError("point cloud frame must be 'mouth'");
  }
  PointCloud cloud;
  take(&cloud.resolution_mm, sizeof(double));
  std::uint64_t count = 0;
  take(&count, sizeof(count));
  if (count > (buf.size() - pos) / (3 * sizeof(double))) throw io::ConfigError("truncated point cloud file");
  cloud.points.resize(count);
  for (Vector3& p : cloud.points) take(p.data(), 3 * sizeof(double));
  if (pos != buf.size()) throw io::ConfigError("trailing bytes in point cloud file");
  return cloud;
}

PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::ConfigError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kBinaryMagic, 4) == 0) return read_cloud_binary(path);
  return read_cloud_csv(path);
}

}  // namespace bite::perception
