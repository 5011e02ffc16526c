#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "momo/denoiser.hpp"
#include "momo/diffusion.hpp"
#include "momo/matrix.hpp"
#include "momo/motion.hpp"

namespace momo::xfer {

// OH = IH + per-head softmax(Q K^T / sqrt(C/h)) V, heads concatenated. The
// optional output projection (w_o: C x C, b_o: 1 x C) is applied to the
// attention term before the residual, as inside the denoiser.
Matrix mixed_attention(const Matrix& q_ldr, const Matrix& k_flw, const Matrix& v_flw, const Matrix& ih_out,
                       std::size_t heads, const Matrix* w_o = nullptr, const Matrix* b_o = nullptr);

enum class PromptPolicy { Follower, None, Fixed };
enum class DirectionMode { Off, RootYawCopy, RotationAugment, MultiSeed };

PromptPolicy parse_prompt_policy(const std::string& s);
DirectionMode parse_direction_mode(const std::string& s);
const char* to_string(PromptPolicy p) noexcept;
const char* to_string(DirectionMode d) noexcept;

struct TransferConfig {
  // Inclusive ranges; layers are 1-based, steps 0-based. A range whose start
  // exceeds its end is empty and disables injection.
  std::size_t s_layer = 2, e_layer = 4;
  std::size_t s_step = 10, e_step = 90;
  PromptPolicy prompt = PromptPolicy::Follower;
  std::string fixed_prompt = "a person";
  DirectionMode direction = DirectionMode::RootYawCopy;
  std::vector<double> angles = {0.0};  // rotation-augment
  std::size_t seeds = 1;                // multi-seed follower count
  model::InjectScope scope = model::InjectScope::FrameTokens;
  bool hard = false;                    // argmax value substitution

  // Layers 2..L and steps ceil(0.1T)..ceil(0.9T).
  static TransferConfig defaults_for(std::size_t layers, std::size_t steps);
  static TransferConfig empty();
  void validate(std::size_t layers, std::size_t steps) const;
  bool injects(std::size_t layer0, std::size_t step) const noexcept;
  nlohmann::json to_json() const;
};

// A stream is either a real motion (inverted to its noise) or a prompt with a
// seed for Gaussian noise.
struct Source {
  std::optional<motion::Motion> motion;
  std::string prompt;          // defaults to the motion's text for motion sources
  std::uint64_t seed = 0;
  std::size_t frames = 60;     // prompt sources only
};

struct TraceOptions {
  std::set<std::size_t> steps;  // steps to record; empty records nothing
  std::set<std::string> elements = {"q", "k", "v"};
};

struct TransferResult {
  motion::Motion out;
  motion::Motion leader;                  // leader as used for direction control
  std::vector<motion::Motion> followers;  // one per follower stream
  Matrix out_model;                       // final x0 of the out stream, model space
  Matrix leader_noise;                    // x_T shared by leader and out
  std::size_t follower_tokens = 0;        // frame rows in the injected K/V
};

TransferResult transfer(const model::Denoiser& m, const diff::NoiseSchedule& s, const Source& leader,
                        const Source& follower, const TransferConfig& cfg, const diff::SamplerConfig& sampler,
                        model::TraceBundle* trace = nullptr, const TraceOptions& trace_options = {});

// root-yaw-copy replaces out's yaw-rate channel with the leader's.
motion::Motion apply_direction_control(const motion::Motion& out, const motion::Motion& leader, DirectionMode mode);

}  // namespace momo::xfer
