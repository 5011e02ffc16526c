#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "momo/error.hpp"
#include "momo/synthgen.hpp"

namespace momo::synth {

using motion::Mat3;
using motion::rot_x;
using motion::rot_y;
using motion::rot_z;

namespace {

constexpr double kLeg = 0.86;         // root to ankle, vertical rest length
constexpr double kAnkleHeight = 0.04; // ankle above ground when planted
constexpr double kPi = std::numbers::pi;

struct ArmPose {
  double flex = 0.0;  // forward raise
  double abd = 0.0;   // sideways raise, positive away from the body
};

struct UpperBody {
  double lean = 0.0;  // chest pitch forward
  ArmPose left, right;
};

UpperBody upper_body(Motif motif, Verb verb, double cycle, std::size_t n) {
  const double swing = verb == Verb::Stand ? 0.0 : (verb == Verb::Run ? 0.5 : 0.35);
  const double s = std::sin(2.0 * kPi * cycle);
  UpperBody u;
  u.lean = verb == Verb::Run ? 0.12 : 0.03;
  // Arms swing against the legs; a jump swings both arms together.
  const double other = verb == Verb::Jump ? s : -s;
  switch (motif) {
    case Motif::Neutral:
      u.left.flex = -swing * s;
      u.right.flex = -swing * other;
      u.left.abd = u.right.abd = 0.05;
      break;
    case Motif::ArmsUp:
      u.left.flex = 2.7 + 0.08 * s;
      u.right.flex = 2.7 + 0.08 * other;
      u.left.abd = u.right.abd = 0.2;
      break;
    case Motif::Crouch:
      u.lean = 0.65;
      u.left.flex = 0.35 - 0.1 * s;
      u.right.flex = 0.35 - 0.1 * other;
      u.left.abd = u.right.abd = 0.05;
      break;
    case Motif::WideArms:
      u.left.abd = u.right.abd = 1.5;
      u.left.flex = 0.1 * s;
      u.right.flex = 0.1 * other;
      break;
    case Motif::Wave:
      u.left.flex = -swing * s;
      u.left.abd = 0.05;
      u.right.abd = 2.5 + 0.4 * std::sin(2.0 * kPi * static_cast<double>(n) / 8.0);
      u.right.flex = 0.3;
      break;
    case Motif::Chicken: {
      const double flap = 0.3 * std::sin(2.0 * kPi * static_cast<double>(n) / 6.0);
      u.left.abd = u.right.abd = 0.8 + flap;
      u.left.flex = u.right.flex = -0.4;
      break;
    }
  }
  return u;
}

Mat3 arm_rotation(const ArmPose& a, bool left) {
  return rot_z(left ? a.abd : -a.abd) * rot_x(-a.flex);
}

void put_rotation(motion::Motion& m, const motion::FeatureLayout& l, std::size_t n, std::size_t joint,
                  const Mat3& r) {
  const auto six = motion::rotation_to_6d(r);
  for (std::size_t k = 0; k < 6; ++k) m.features(n, l.joint_rot + 6 * (joint - 1) + k) = six[k];
}

}  // namespace

int stance_frames(Verb v, int period) {
  switch (v) {
    case Verb::Walk: return period / 2;
    case Verb::Run: return static_cast<int>(std::lround(0.35 * period));
    case Verb::Jump: return static_cast<int>(std::lround(0.4 * period));
    case Verb::Stand: return period;
  }
  return period;
}

Sample generate(const GaitSpec& spec) {
  spec.validate();
  const motion::Skeleton skel = motion::Skeleton::desk_default();
  const motion::FeatureLayout l(skel.joints());
  const std::size_t n_frames = spec.frames;
  const int p = spec.period;
  const int stance = stance_frames(spec.verb, p);
  const int swing = p - stance;
  const bool loco = spec.locomotion();
  const double v = loco ? spec.speed : 0.0;
  // Half stride: a planted foot travels 2A backwards relative to the root.
  const double amp = v * stance / 2.0;
  const double planted_height = kAnkleHeight + std::sqrt(std::max(0.0, kLeg * kLeg - amp * amp));
  const double hop = spec.verb == Verb::Jump ? 0.12 : (spec.verb == Verb::Run ? 0.04 : 0.0);
  // Right foot leads by half a cycle except when both feet jump together.
  const int right_shift = (spec.verb == Verb::Walk || spec.verb == Verb::Run) ? p / 2 : 0;

  Sample out;
  out.spec = spec;
  out.label = label_for(spec.verb, spec.motif);
  out.motion.skeleton = skel;
  out.motion.fps = spec.fps;
  out.motion.text = out.label;
  out.motion.features = Matrix(n_frames, l.width);
  out.contact_truth = Matrix(n_frames, 4);
  out.phase.resize(n_frames);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> noise(-spec.jitter, spec.jitter);
  auto jit = [&]() { return spec.jitter > 0.0 ? noise(rng) : 0.0; };

  for (std::size_t n = 0; n < n_frames; ++n) {
    const int base = static_cast<int>((n + static_cast<std::size_t>(spec.phase_offset)) % static_cast<std::size_t>(p));
    const int foot_phase[2] = {base, (base + right_shift) % p};
    out.phase[n] = loco ? static_cast<double>(base) / p : 0.0;

    double d[2];
    bool planted[2];
    for (int f = 0; f < 2; ++f) {
      const int m = foot_phase[f];
      planted[f] = !loco || m < stance;
      if (!loco) {
        d[f] = 0.0;
      } else if (planted[f]) {
        d[f] = amp * (1.0 - 2.0 * m / static_cast<double>(stance));
      } else {
        d[f] = amp * (-1.0 + 2.0 * (m - stance) / static_cast<double>(swing));
      }
    }

    double height = planted_height;
    if (!planted[0] && !planted[1]) {
      // Flight: both feet off the ground. Progress through the flight window.
      int into = 0, len = 1;
      if (spec.verb == Verb::Jump) {
        into = foot_phase[0] - stance;
        len = swing;
      } else {
        const int half = p / 2;
        into = foot_phase[0] % half - stance;
        len = half - stance;
      }
      const double u = static_cast<double>(into) / std::max(len, 1);
      height = planted_height + 4.0 * hop * u * (1.0 - u);
    } else {
      const int f = planted[0] ? 0 : 1;
      const double s = d[f] / kLeg;
      height = kAnkleHeight + kLeg * std::sqrt(std::max(0.0, 1.0 - s * s));
    }

    out.motion.features(n, l.root_yaw_vel) = loco ? spec.turn_rate : 0.0;
    out.motion.features(n, l.root_vel_x) = 0.0;
    out.motion.features(n, l.root_vel_z) = v;
    out.motion.features(n, l.root_height) = height;

    for (int f = 0; f < 2; ++f) {
      const double theta = std::asin(std::clamp(d[f] / kLeg, -1.0, 1.0));
      const std::size_t ankle = f == 0 ? 1 : 3;
      put_rotation(out.motion, l, n, ankle, rot_x(-theta));
      put_rotation(out.motion, l, n, ankle + 1, rot_x(theta));
      const double truth = planted[f] ? 1.0 : 0.0;
      out.contact_truth(n, 2 * f) = truth;
      out.contact_truth(n, 2 * f + 1) = truth;
    }

    UpperBody ub = upper_body(spec.motif, spec.verb, out.phase[n], n);
    ub.lean += jit();
    ub.left.flex += jit();
    ub.left.abd += jit();
    ub.right.flex += jit();
    ub.right.abd += jit();
    put_rotation(out.motion, l, n, 5, rot_x(ub.lean));
    put_rotation(out.motion, l, n, 6, arm_rotation(ub.left, true));
    put_rotation(out.motion, l, n, 7, arm_rotation(ub.right, false));
  }
  motion::derive_redundant_features(out.motion);
  return out;
}

}  // namespace momo::synth
