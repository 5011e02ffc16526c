#include <cmath>
#include <string>

#include "momo/error.hpp"
#include "momo/motion.hpp"

namespace momo::motion {

void Skeleton::validate() const {
  const std::size_t j = parents.size();
  require(j >= 2, ErrorKind::Schema, "skeleton needs at least 2 joints");
  require(offsets.size() == j, ErrorKind::Schema, "offsets: expected one per joint");
  require(parents[0] == -1, ErrorKind::Schema, "parents[0] must be -1");
  for (std::size_t i = 1; i < j; ++i) {
    require(parents[i] >= 0 && static_cast<std::size_t>(parents[i]) < i, ErrorKind::Schema,
            "parents[" + std::to_string(i) + "] must reference an earlier joint");
  }
  for (std::size_t i = 0; i < j; ++i) {
    for (double v : offsets[i]) {
      require(std::isfinite(v), ErrorKind::Schema, "offsets[" + std::to_string(i) + "] not finite");
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const int f = foot_joints[k];
    require(f > 0 && static_cast<std::size_t>(f) < j, ErrorKind::Schema,
            "foot_joints[" + std::to_string(k) + "] out of range");
    for (std::size_t q = 0; q < k; ++q) {
      require(foot_joints[q] != f, ErrorKind::Schema, "foot_joints must be distinct");
    }
  }
}

Skeleton Skeleton::desk_default() {
  Skeleton s;
  s.parents = {-1, 0, 1, 0, 3, 0, 5, 5};
  s.offsets = {{{0.0, 0.0, 0.0}},
               {{0.1, -0.86, 0.0}},
               {{0.0, -0.03, 0.14}},
               {{-0.1, -0.86, 0.0}},
               {{0.0, -0.03, 0.14}},
               {{0.0, 0.6, 0.0}},
               {{0.2, -0.55, 0.0}},
               {{-0.2, -0.55, 0.0}}};
  s.foot_joints = {1, 2, 3, 4};
  return s;
}

Skeleton Skeleton::humanml22() {
  Skeleton s;
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  s.offsets = {{{0.0, 0.0, 0.0}},     {{0.06, -0.09, 0.0}},  {{-0.06, -0.09, 0.0}},
               {{0.0, 0.11, -0.01}},  {{0.04, -0.38, 0.0}},  {{-0.04, -0.38, 0.0}},
               {{0.0, 0.14, 0.03}},   {{-0.01, -0.40, -0.04}}, {{0.01, -0.40, -0.04}},
               {{0.0, 0.06, 0.0}},    {{0.04, -0.06, 0.12}}, {{-0.04, -0.06, 0.12}},
               {{0.0, 0.21, -0.03}},  {{0.08, 0.12, -0.02}}, {{-0.08, 0.12, -0.02}},
               {{0.01, 0.09, 0.05}},  {{0.12, 0.05, -0.01}}, {{-0.12, 0.05, -0.01}},
               {{0.26, -0.01, -0.02}}, {{-0.26, -0.01, -0.02}}, {{0.27, 0.01, 0.0}},
               {{-0.27, 0.01, 0.0}}};
  s.foot_joints = {7, 10, 8, 11};
  return s;
}

FeatureLayout::FeatureLayout(std::size_t j) : joints(j) {
  require(j >= 2, ErrorKind::InvalidArgument, "joint count must be >= 2");
  joint_rot = joint_pos + pos_size();
  joint_vel = joint_rot + rot_size();
  contacts = joint_vel + vel_size();
  width = contacts + 4;
}

std::size_t feature_width(std::size_t joints) { return FeatureLayout(joints).width; }

PoseParts zero_parts(std::size_t joints) {
  const FeatureLayout l(joints);
  PoseParts p;
  p.joint_pos.assign(l.pos_size(), 0.0);
  p.joint_rot.assign(l.rot_size(), 0.0);
  p.joint_vel.assign(l.vel_size(), 0.0);
  return p;
}

std::vector<double> pack(const PoseParts& parts, std::size_t joints) {
  const FeatureLayout l(joints);
  require(parts.joint_pos.size() == l.pos_size(), ErrorKind::Schema, "joint_pos size mismatch");
  require(parts.joint_rot.size() == l.rot_size(), ErrorKind::Schema, "joint_rot size mismatch");
  require(parts.joint_vel.size() == l.vel_size(), ErrorKind::Schema, "joint_vel size mismatch");
  std::vector<double> out;
  out.reserve(l.width);
  out.push_back(parts.root_yaw_vel);
  out.push_back(parts.root_vel_x);
  out.push_back(parts.root_vel_z);
  out.push_back(parts.root_height);
  out.insert(out.end(), parts.joint_pos.begin(), parts.joint_pos.end());
  out.insert(out.end(), parts.joint_rot.begin(), parts.joint_rot.end());
  out.insert(out.end(), parts.joint_vel.begin(), parts.joint_vel.end());
  out.insert(out.end(), parts.contacts.begin(), parts.contacts.end());
  return out;
}

PoseParts unpack(std::span<const double> frame, std::size_t joints) {
  const FeatureLayout l(joints);
  require(frame.size() == l.width, ErrorKind::Schema,
          "frame length " + std::to_string(frame.size()) + " != F=" + std::to_string(l.width));
  PoseParts p;
  p.root_yaw_vel = frame[l.root_yaw_vel];
  p.root_vel_x = frame[l.root_vel_x];
  p.root_vel_z = frame[l.root_vel_z];
  p.root_height = frame[l.root_height];
  auto take = [&](std::size_t off, std::size_t n) {
    return std::vector<double>(frame.begin() + off, frame.begin() + off + n);
  };
  p.joint_pos = take(l.joint_pos, l.pos_size());
  p.joint_rot = take(l.joint_rot, l.rot_size());
  p.joint_vel = take(l.joint_vel, l.vel_size());
  for (std::size_t k = 0; k < 4; ++k) p.contacts[k] = frame[l.contacts + k];
  return p;
}

void Motion::validate() const {
  skeleton.validate();
  require(features.rows() >= 1, ErrorKind::Schema, "motion needs at least one frame");
  require(features.cols() == feature_width(skeleton.joints()), ErrorKind::Schema,
          "feature width " + std::to_string(features.cols()) + " does not match skeleton (F=" +
              std::to_string(feature_width(skeleton.joints())) + ")");
  require(features.all_finite(), ErrorKind::Schema, "motion features contain non-finite values");
  require(fps > 0, ErrorKind::Schema, "fps must be positive");
  require(std::isfinite(heading), ErrorKind::Schema, "heading not finite");
}

}  // namespace momo::motion
