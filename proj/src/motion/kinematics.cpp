#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "momo/error.hpp"
#include "momo/motion.hpp"

namespace momo::motion {

std::array<double, 6> rotation_to_6d(const Mat3& r) {
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

Mat3 rotation_from_6d(std::span<const double> six) {
  require(six.size() == 6, ErrorKind::Decode, "6D rotation block needs 6 values");
  Vec3 a(six[0], six[1], six[2]);
  Vec3 b(six[3], six[4], six[5]);
  const double na = a.norm();
  if (!(na >= 1e-8)) fail(ErrorKind::Decode, "degenerate 6D rotation: first column norm below 1e-8");
  const Vec3 c0 = a / na;
  Vec3 c1 = b - c0.dot(b) * c0;
  const double n1 = c1.norm();
  if (!(n1 >= 1e-8)) {
    // Second column parallel to the first: pick any orthogonal direction.
    const Vec3 helper = std::abs(c0.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    c1 = (helper - c0.dot(helper) * c0).normalized();
  } else {
    c1 /= n1;
  }
  Mat3 r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c0.cross(c1);
  return r;
}

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

namespace {

Vec3 offset_of(const Skeleton& s, std::size_t j) {
  return Vec3(s.offsets[j][0], s.offsets[j][1], s.offsets[j][2]);
}

std::vector<Mat3> local_rotations(const Motion& m, const FeatureLayout& l, std::size_t n) {
  const std::size_t jn = l.joints;
  std::vector<Mat3> rots(jn, Mat3::Identity());
  const auto row = m.features.row(n);
  for (std::size_t j = 1; j < jn; ++j) {
    const std::size_t off = l.joint_rot + 6 * (j - 1);
    try {
      rots[j] = rotation_from_6d(row.subspan(off, 6));
    } catch (const Error& e) {
      fail(ErrorKind::Decode, std::string(e.what()) + " (frame " + std::to_string(n) + ", joint " +
                                  std::to_string(j) + ")");
    }
  }
  return rots;
}

}  // namespace

RootTrack integrate_root(const Motion& m) {
  const FeatureLayout l(m.skeleton.joints());
  const std::size_t n = m.frames();
  RootTrack track;
  track.heading.resize(n + 1);
  track.position.resize(n);
  track.heading[0] = m.heading;
  for (std::size_t i = 0; i < n; ++i) {
    track.heading[i + 1] = track.heading[i] + m.features(i, l.root_yaw_vel);
  }
  Vec3 ground(0.0, 0.0, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const Vec3 v(m.features(i - 1, l.root_vel_x), 0.0, m.features(i - 1, l.root_vel_z));
      ground += rot_y(track.heading[i - 1]) * v;
    }
    track.position[i] = Vec3(ground.x(), m.features(i, l.root_height), ground.z());
  }
  return track;
}

Positions fk(const Motion& m) {
  const std::size_t jn = m.skeleton.joints();
  const FeatureLayout l(jn);
  require(m.features.cols() == l.width, ErrorKind::Schema, "fk: feature width does not match skeleton");
  const RootTrack root = integrate_root(m);
  Positions out;
  out.frames = m.frames();
  out.joints = jn;
  out.data.resize(out.frames * jn);
  std::vector<Mat3> global(jn);
  for (std::size_t n = 0; n < out.frames; ++n) {
    const std::vector<Mat3> local = local_rotations(m, l, n);
    global[0] = rot_y(root.heading[n]);
    out.at(n, 0) = root.position[n];
    for (std::size_t j = 1; j < jn; ++j) {
      const auto p = static_cast<std::size_t>(m.skeleton.parents[j]);
      global[j] = global[p] * local[j];
      out.at(n, j) = out.at(n, p) + global[j] * offset_of(m.skeleton, j);
    }
  }
  return out;
}

Matrix contacts_from_positions(const Positions& positions, const std::array<int, 4>& foot_joints,
                               ContactThresholds thresholds) {
  const double vt = std::max(thresholds.velocity, 1e-12);
  const double ht = std::max(thresholds.height, 1e-12);
  const std::size_t n = positions.frames;
  Matrix labels(n, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto j = static_cast<std::size_t>(foot_joints[k]);
    for (std::size_t i = 0; i < n; ++i) {
      double speed = 0.0;
      if (n >= 2) {
        const std::size_t a = (i + 1 < n) ? i : i - 1;
        speed = (positions.at(a + 1, j) - positions.at(a, j)).norm();
      }
      const double height = positions.at(i, j).y();
      labels(i, k) = (speed < vt && height < ht) ? 1.0 : 0.0;
    }
  }
  return labels;
}

Motion rotate_about_vertical(const Motion& m, double angle) {
  Motion out = m;
  out.heading = m.heading + angle;
  return out;
}

void derive_redundant_features(Motion& m, ContactThresholds thresholds) {
  const std::size_t jn = m.skeleton.joints();
  const FeatureLayout l(jn);
  const Positions pos = fk(m);
  const RootTrack root = integrate_root(m);
  const std::size_t n = m.frames();
  for (std::size_t i = 0; i < n; ++i) {
    const Mat3 inv = rot_y(root.heading[i]).transpose();
    for (std::size_t j = 1; j < jn; ++j) {
      const Vec3 rel = inv * (pos.at(i, j) - pos.at(i, 0));
      for (int c = 0; c < 3; ++c) m.features(i, l.joint_pos + 3 * (j - 1) + c) = rel[c];
    }
    for (std::size_t j = 0; j < jn; ++j) {
      Vec3 vel = Vec3::Zero();
      if (n >= 2) {
        const std::size_t a = (i + 1 < n) ? i : i - 1;
        vel = rot_y(root.heading[a]).transpose() * (pos.at(a + 1, j) - pos.at(a, j));
      }
      for (int c = 0; c < 3; ++c) m.features(i, l.joint_vel + 3 * j + c) = vel[c];
    }
  }
  const Matrix contacts = contacts_from_positions(pos, m.skeleton.foot_joints, thresholds);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 4; ++k) m.features(i, l.contacts + k) = contacts(i, k);
  }
}

double bone_elevation(const Motion& m, std::size_t frame, std::size_t joint) {
  const std::size_t jn = m.skeleton.joints();
  require(joint >= 1 && joint < jn, ErrorKind::InvalidArgument, "bone_elevation: joint out of range");
  const FeatureLayout l(jn);
  const std::vector<Mat3> local = local_rotations(m, l, frame);
  std::vector<Mat3> global(jn, Mat3::Identity());
  for (std::size_t j = 1; j <= joint; ++j) {
    global[j] = global[static_cast<std::size_t>(m.skeleton.parents[j])] * local[j];
  }
  const Vec3 bone = global[joint] * offset_of(m.skeleton, joint);
  const double len = bone.norm();
  if (len == 0.0) return 0.0;
  return std::acos(std::clamp(-bone.y() / len, -1.0, 1.0));
}

}  // namespace momo::motion
