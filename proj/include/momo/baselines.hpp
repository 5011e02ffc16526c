#pragma once

#include <cstddef>
#include <string>

#include "momo/denoiser.hpp"
#include "momo/diffusion.hpp"
#include "momo/motion.hpp"
#include "momo/transfer.hpp"

namespace momo::base {

enum class NnVariant { MotionSpace, MotionSpaceSoftmax, LatentSpace };

NnVariant parse_variant(const std::string& s);
const char* to_string(NnVariant v) noexcept;

struct NnConfig {
  NnVariant variant = NnVariant::MotionSpace;
  double temperature = 1.0;
  // Latent variant: 0-based layer and diffusion step. Negative means the
  // analysis defaults (last layer, step 0.3T).
  long layer = -1;
  long step = -1;

  void validate() const;
};

// Squared Euclidean distance between frames over all channels except the
// root velocities (yaw rate, planar velocity).
Matrix pose_distances(const motion::Motion& leader, const motion::Motion& follower);

motion::Motion nn_motion_space(const motion::Motion& leader, const motion::Motion& follower);
motion::Motion nn_softmax(const motion::Motion& leader, const motion::Motion& follower, double temperature);

// Single (layer, step) hard V substitution inside the transfer loop. `base`
// supplies prompt policy, direction mode and scope; its ranges are replaced.
xfer::TransferResult nn_latent(const model::Denoiser& m, const diff::NoiseSchedule& s, const xfer::Source& leader,
                               const xfer::Source& follower, const NnConfig& cfg, const diff::SamplerConfig& sampler,
                               const xfer::TransferConfig& base);

}  // namespace momo::base
