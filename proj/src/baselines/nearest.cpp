#include <cmath>
#include <limits>

#include "momo/baselines.hpp"
#include "momo/error.hpp"

namespace momo::base {

NnVariant parse_variant(const std::string& s) {
  if (s == "nn-motion") return NnVariant::MotionSpace;
  if (s == "nn-softmax") return NnVariant::MotionSpaceSoftmax;
  if (s == "nn-latent") return NnVariant::LatentSpace;
  fail(ErrorKind::InvalidArgument, "unknown baseline '" + s + "'");
}

const char* to_string(NnVariant v) noexcept {
  switch (v) {
    case NnVariant::MotionSpace: return "nn-motion";
    case NnVariant::MotionSpaceSoftmax: return "nn-softmax";
    case NnVariant::LatentSpace: return "nn-latent";
  }
  return "?";
}

void NnConfig::validate() const {
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::InvalidArgument, "temperature must be > 0");
}

namespace {

void check_pair(const motion::Motion& a, const motion::Motion& b) {
  require(a.skeleton.parents == b.skeleton.parents && a.features.cols() == b.features.cols(),
          ErrorKind::InvalidArgument, "leader and follower use different skeletons");
  require(a.frames() >= 1 && b.frames() >= 1, ErrorKind::InvalidArgument, "motions need at least one frame");
}

}  // namespace

Matrix pose_distances(const motion::Motion& leader, const motion::Motion& follower) {
  check_pair(leader, follower);
  const motion::FeatureLayout l(leader.skeleton.joints());
  Matrix d(leader.frames(), follower.frames());
  for (std::size_t i = 0; i < leader.frames(); ++i) {
    for (std::size_t j = 0; j < follower.frames(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < l.width; ++c) {
        if (c == l.root_yaw_vel || c == l.root_vel_x || c == l.root_vel_z) continue;
        const double e = leader.features(i, c) - follower.features(j, c);
        acc += e * e;
      }
      d(i, j) = acc;
    }
  }
  return d;
}

motion::Motion nn_motion_space(const motion::Motion& leader, const motion::Motion& follower) {
  const Matrix d = pose_distances(leader, follower);
  motion::Motion out = leader;
  out.text = follower.text;
  for (std::size_t i = 0; i < leader.frames(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < follower.frames(); ++j)
      if (d(i, j) < d(i, best)) best = j;
    const auto src = follower.features.row(best);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
  }
  return out;
}

motion::Motion nn_softmax(const motion::Motion& leader, const motion::Motion& follower, double temperature) {
  NnConfig{NnVariant::MotionSpaceSoftmax, temperature}.validate();
  const Matrix d = pose_distances(leader, follower);
  motion::Motion out = leader;
  out.text = follower.text;
  std::vector<double> w(follower.frames());
  for (std::size_t i = 0; i < leader.frames(); ++i) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < w.size(); ++j) lo = std::min(lo, d(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] = std::exp(-(d(i, j) - lo) / temperature);
    auto row = out.features.row(i);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const auto src = follower.features.row(j);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += (w[j] / z) * src[c];
    }
  }
  return out;
}

xfer::TransferResult nn_latent(const model::Denoiser& m, const diff::NoiseSchedule& s, const xfer::Source& leader,
                               const xfer::Source& follower, const NnConfig& cfg, const diff::SamplerConfig& sampler,
                               const xfer::TransferConfig& base) {
  cfg.validate();
  const long layers = static_cast<long>(m.config().layers);
  const long steps = static_cast<long>(s.steps);
  const long layer = cfg.layer < 0 ? layers - 1 : cfg.layer;
  const long step = cfg.step < 0 ? static_cast<long>(std::lround(0.3 * static_cast<double>(steps))) : cfg.step;
  require(layer < layers, ErrorKind::InvalidArgument,
          "nn-latent layer " + std::to_string(layer) + " outside model (" + std::to_string(layers) + " layers)");
  require(step < steps, ErrorKind::InvalidArgument,
          "nn-latent step " + std::to_string(step) + " outside schedule (" + std::to_string(steps) + " steps)");
  xfer::TransferConfig t = base;
  t.s_layer = t.e_layer = static_cast<std::size_t>(layer) + 1;
  t.s_step = t.e_step = static_cast<std::size_t>(step);
  t.hard = true;
  return xfer::transfer(m, s, leader, follower, t, sampler);
}

}  // namespace momo::base
