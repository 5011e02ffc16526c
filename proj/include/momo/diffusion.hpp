#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "momo/denoiser.hpp"
#include "momo/matrix.hpp"
#include "momo/motion.hpp"

namespace momo::diff {

enum class ScheduleKind { Cosine, Linear };
ScheduleKind parse_schedule_kind(std::string_view s);

// Step t in [0, T) has cumulative signal level alpha_bar[t]; alpha_bar[0] is
// the least noisy step and is strictly below 1.
struct NoiseSchedule {
  std::size_t steps = 0;
  ScheduleKind kind = ScheduleKind::Cosine;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

NoiseSchedule build_schedule(std::size_t steps, ScheduleKind kind = ScheduleKind::Cosine);

Matrix forward_diffuse(const Matrix& x0, double alpha_bar, const Matrix& noise);
Matrix forward_diffuse(const Matrix& x0, const NoiseSchedule& s, std::size_t t, const Matrix& noise);

Matrix guide(const Matrix& x0_cond, const Matrix& x0_uncond, double scale);

// Deterministic (eta = 0) DDIM update written for an x0-predicting model.
Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, double alpha_bar_t, double alpha_bar_prev);
Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, std::size_t t, std::size_t t_prev, const NoiseSchedule& s);
// Noise implied by an x0 prediction.
Matrix implied_noise(const Matrix& x_t, const Matrix& x0_hat, double alpha_bar_t);

// Descending step indices visited by a sampler with the given stride; always
// starts at T-1 and ends at 0.
std::vector<std::size_t> sampling_steps(std::size_t steps, std::size_t stride);

// x0 prediction at (x_t, t), guidance already applied.
using Predictor = std::function<Matrix(const Matrix& x_t, std::size_t t)>;

struct SampleResult {
  Matrix x0_hat;       // final prediction at step 0
  Matrix final_state;  // sampler state x_0
};

SampleResult sample_loop(const NoiseSchedule& s, const Matrix& x_start, const Predictor& predict, std::size_t stride = 1);

// Trajectory of states at the visited steps in ascending order; front() is
// the clean input, back() the inverted noise at step T-1.
std::vector<Matrix> invert_loop(const NoiseSchedule& s, const Matrix& x0, const Predictor& predict, std::size_t stride = 1);

// ---- model-backed operations ------------------------------------------------

struct SamplerConfig {
  double guidance = 2.5;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
};

// Classifier-free guided x0 prediction. With scale 1 the uncond pass is skipped.
Matrix predict_guided(const model::Denoiser& m, const Matrix& x_t, std::size_t t, const model::PromptEncoding& cond,
                      const model::PromptEncoding& uncond, double scale, model::Taps* cond_taps = nullptr,
                      model::Taps* uncond_taps = nullptr);

// Standard normal N x F drawn from the seed.
Matrix initial_noise(std::size_t frames, std::size_t features, std::uint64_t seed);

SampleResult sample(const model::Denoiser& m, const NoiseSchedule& s, std::string_view prompt, std::size_t frames,
                    const SamplerConfig& cfg, const std::optional<Matrix>& x_start = std::nullopt);

// Inversion always runs at guidance 1.
std::vector<Matrix> ddim_invert(const model::Denoiser& m, const NoiseSchedule& s, const Matrix& x0,
                                std::string_view prompt, std::size_t stride = 1);

Matrix to_model_space(const model::Denoiser& m, const motion::Motion& motion);
motion::Motion from_model_space(const model::Denoiser& m, const Matrix& x, std::optional<std::string> text,
                                int fps = 20);

// ---- training ---------------------------------------------------------------

struct TrainConfig {
  std::size_t batch = 8;
  double lr = 1e-3;
  double lr_final = 1e-3;  // linear decay from lr to lr_final over the run
  std::size_t steps = 1000;
  double cond_dropout = 0.1;
  std::uint64_t seed = 0;
};

struct TrainExample {
  Matrix x0;  // model space
  std::vector<std::size_t> ids;
};

using TrainCallback = std::function<void(std::size_t step, double loss)>;

// Returns the per-step loss. Throws NonFinite naming the step on divergence.
std::vector<double> train(model::Denoiser& m, const NoiseSchedule& s, const std::vector<TrainExample>& data,
                          const TrainConfig& cfg, const TrainCallback& on_step = {});

}  // namespace momo::diff
