#include <cmath>

#include "momo/diffusion.hpp"
#include "momo/error.hpp"

namespace momo::diff {

Matrix predict_guided(const model::Denoiser& m, const Matrix& x_t, std::size_t t, const model::PromptEncoding& cond,
                      const model::PromptEncoding& uncond, double scale, model::Taps* cond_taps,
                      model::Taps* uncond_taps) {
  require(scale >= 0.0 && std::isfinite(scale), ErrorKind::InvalidArgument, "guidance scale must be >= 0");
  Matrix c = m.denoise(x_t, t, cond, cond_taps);
  if (scale == 1.0) return c;
  const Matrix u = m.denoise(x_t, t, uncond, uncond_taps);
  return guide(c, u, scale);
}

SampleResult sample(const model::Denoiser& m, const NoiseSchedule& s, std::string_view prompt, std::size_t frames,
                    const SamplerConfig& cfg, const std::optional<Matrix>& x_start) {
  require(s.steps == m.config().steps, ErrorKind::InvalidArgument, "schedule length differs from the model's T");
  const Matrix x = x_start ? *x_start : initial_noise(frames, m.config().features, cfg.seed);
  const auto cond = m.encode_prompt(prompt);
  const auto uncond = m.encode_prompt("");
  return sample_loop(
      s, x, [&](const Matrix& xt, std::size_t t) { return predict_guided(m, xt, t, cond, uncond, cfg.guidance); },
      cfg.stride);
}

std::vector<Matrix> ddim_invert(const model::Denoiser& m, const NoiseSchedule& s, const Matrix& x0,
                                std::string_view prompt, std::size_t stride) {
  require(s.steps == m.config().steps, ErrorKind::InvalidArgument, "schedule length differs from the model's T");
  const auto cond = m.encode_prompt(prompt);
  return invert_loop(s, x0, [&](const Matrix& xt, std::size_t t) { return m.denoise(xt, t, cond); }, stride);
}

Matrix to_model_space(const model::Denoiser& m, const motion::Motion& mo) {
  require(mo.features.cols() == m.config().features, ErrorKind::InvalidArgument,
          "motion feature width does not match the model");
  return m.normalizer.normalize(mo.features);
}

motion::Motion from_model_space(const model::Denoiser& m, const Matrix& x, std::optional<std::string> text, int fps) {
  motion::Motion out;
  out.skeleton = motion::Skeleton::desk_default();
  require(motion::feature_width(out.skeleton.joints()) == x.cols(), ErrorKind::InvalidArgument,
          "model feature width does not match the desk skeleton");
  out.features = m.normalizer.denormalize(x);
  out.text = std::move(text);
  out.fps = fps;
  return out;
}

}  // namespace momo::diff
