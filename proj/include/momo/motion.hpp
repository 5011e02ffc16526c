#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "momo/matrix.hpp"

namespace momo::motion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Joint 0 is the root. Parents precede children. Each non-root joint's
// stored rotation orients the bone from its parent to itself.
struct Skeleton {
  std::vector<int> parents;
  std::vector<std::array<double, 3>> offsets;
  std::array<int, 4> foot_joints{};  // left pair, then right pair

  std::size_t joints() const noexcept { return parents.size(); }
  void validate() const;

  // root, L ankle, L toe, R ankle, R toe, neck/head, L hand, R hand
  static Skeleton desk_default();
  // 22-joint HumanML3D-style layout (approximate rest offsets).
  static Skeleton humanml22();

  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

// Column layout of one frame (HumanML3D ordering).
struct FeatureLayout {
  std::size_t joints = 0;
  std::size_t root_yaw_vel = 0;
  std::size_t root_vel_x = 1;
  std::size_t root_vel_z = 2;
  std::size_t root_height = 3;
  std::size_t joint_pos = 4;
  std::size_t joint_rot = 0;
  std::size_t joint_vel = 0;
  std::size_t contacts = 0;
  std::size_t width = 0;

  explicit FeatureLayout(std::size_t j);
  std::size_t pos_size() const noexcept { return 3 * (joints - 1); }
  std::size_t rot_size() const noexcept { return 6 * (joints - 1); }
  std::size_t vel_size() const noexcept { return 3 * joints; }
};

std::size_t feature_width(std::size_t joints);

struct PoseParts {
  double root_yaw_vel = 0.0;
  double root_vel_x = 0.0;
  double root_vel_z = 0.0;
  double root_height = 0.0;
  std::vector<double> joint_pos;  // 3(J-1)
  std::vector<double> joint_rot;  // 6(J-1)
  std::vector<double> joint_vel;  // 3J
  std::array<double, 4> contacts{};
};

std::vector<double> pack(const PoseParts& parts, std::size_t joints);
PoseParts unpack(std::span<const double> frame, std::size_t joints);
PoseParts zero_parts(std::size_t joints);

struct Motion {
  Skeleton skeleton;
  Matrix features;  // N x F
  int fps = 20;
  std::optional<std::string> text;
  // Heading of the root at frame 0 (radians about +Y). Features are
  // heading-relative, so this is the only place a global yaw lives.
  double heading = 0.0;

  std::size_t frames() const noexcept { return features.rows(); }
  void validate() const;
};

// 6D continuous rotation: the first two columns of the matrix, column-major.
std::array<double, 6> rotation_to_6d(const Mat3& r);
// Gram-Schmidt on the two columns; throws Decode on a near-zero first column.
Mat3 rotation_from_6d(std::span<const double> six);

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

// Global joint positions, frame-major.
struct Positions {
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<Vec3> data;

  Vec3& at(std::size_t n, std::size_t j) { return data[n * joints + j]; }
  const Vec3& at(std::size_t n, std::size_t j) const { return data[n * joints + j]; }
};

struct RootTrack {
  std::vector<double> heading;  // N + 1 values; the last integrates the final frame
  std::vector<Vec3> position;   // N values
};

RootTrack integrate_root(const Motion& m);
Positions fk(const Motion& m);

struct ContactThresholds {
  double velocity = 0.01;  // m/frame
  double height = 0.05;    // m
};

// N x 4 binary labels for the skeleton's foot joints. Speed uses the forward
// difference; the last frame repeats the previous speed.
Matrix contacts_from_positions(const Positions& positions, const std::array<int, 4>& foot_joints,
                               ContactThresholds thresholds = {});

Motion rotate_about_vertical(const Motion& m, double angle);

// Recomputes j^p, j^v and c^f from the root channels and j^r.
void derive_redundant_features(Motion& m, ContactThresholds thresholds = {});

// Angle between the bone (parent -> joint) and straight down, in the root frame.
double bone_elevation(const Motion& m, std::size_t frame, std::size_t joint);

Motion read_motion(const std::filesystem::path& path);
void write_motion(const Motion& m, const std::filesystem::path& path);
std::string motion_to_json(const Motion& m);
Motion motion_from_json(const std::string& text);

}  // namespace momo::motion
