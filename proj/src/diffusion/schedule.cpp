#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "momo/diffusion.hpp"
#include "momo/error.hpp"

namespace momo::diff {

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "cosine") return ScheduleKind::Cosine;
  if (s == "linear") return ScheduleKind::Linear;
  fail(ErrorKind::InvalidArgument, "unknown schedule kind '" + std::string(s) + "'");
}

NoiseSchedule build_schedule(std::size_t steps, ScheduleKind kind) {
  require(steps >= 2, ErrorKind::InvalidArgument, "schedule needs T >= 2");
  NoiseSchedule s;
  s.steps = steps;
  s.kind = kind;
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  const double big_t = static_cast<double>(steps);
  if (kind == ScheduleKind::Cosine) {
    constexpr double s0 = 0.008;
    auto f = [&](double t) {
      const double c = std::cos(((t / big_t) + s0) / (1.0 + s0) * std::numbers::pi / 2.0);
      return c * c;
    };
    // Step t covers the cosine curve at t+1 so the first step already carries noise.
    const double f0 = f(0.0);
    double prev = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      double a = f(static_cast<double>(t + 1)) / f0 / prev;
      a = std::clamp(a, 0.001, 1.0);
      s.alpha[t] = a;
      prev *= a;
      s.alpha_bar[t] = prev;
    }
  } else if (kind == ScheduleKind::Linear) {
    const double scale = 1000.0 / big_t;
    const double lo = scale * 1e-4, hi = scale * 0.02;
    double prev = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double beta = lo + (hi - lo) * static_cast<double>(t) / (big_t - 1.0);
      s.alpha[t] = std::clamp(1.0 - beta, 0.001, 1.0);
      prev *= s.alpha[t];
      s.alpha_bar[t] = prev;
    }
  } else {
    fail(ErrorKind::InvalidArgument, "unknown schedule kind");
  }
  return s;
}

Matrix forward_diffuse(const Matrix& x0, double alpha_bar, const Matrix& noise) {
  require(x0.same_shape(noise), ErrorKind::InvalidArgument, "forward_diffuse: noise shape differs from x0");
  require(alpha_bar >= 0.0 && alpha_bar <= 1.0, ErrorKind::InvalidArgument, "forward_diffuse: alpha_bar outside [0,1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a * x0.values()[i] + b * noise.values()[i];
  return out;
}

Matrix forward_diffuse(const Matrix& x0, const NoiseSchedule& s, std::size_t t, const Matrix& noise) {
  require(t < s.steps, ErrorKind::InvalidArgument, "forward_diffuse: t outside [0, T)");
  return forward_diffuse(x0, s.alpha_bar[t], noise);
}

Matrix guide(const Matrix& x0_cond, const Matrix& x0_uncond, double scale) {
  require(x0_cond.same_shape(x0_uncond), ErrorKind::InvalidArgument, "guide: shapes differ");
  if (scale == 1.0) return x0_cond;
  if (scale == 0.0) return x0_uncond;
  Matrix out(x0_cond.rows(), x0_cond.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = x0_uncond.values()[i];
    out.values()[i] = u + scale * (x0_cond.values()[i] - u);
  }
  return out;
}

Matrix implied_noise(const Matrix& x_t, const Matrix& x0_hat, double alpha_bar_t) {
  require(x_t.same_shape(x0_hat), ErrorKind::InvalidArgument, "ddim: x_t and x0_hat shapes differ");
  if (!(alpha_bar_t < 1.0)) fail(ErrorKind::InvalidArgument, "ddim: alpha_bar_t = 1 leaves no noise to divide by");
  const double a = std::sqrt(alpha_bar_t), b = std::sqrt(1.0 - alpha_bar_t);
  Matrix eps(x_t.rows(), x_t.cols());
  for (std::size_t i = 0; i < eps.size(); ++i) eps.values()[i] = (x_t.values()[i] - a * x0_hat.values()[i]) / b;
  return eps;
}

Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, double alpha_bar_t, double alpha_bar_prev) {
  if (alpha_bar_prev == alpha_bar_t) return x_t;
  const Matrix eps = implied_noise(x_t, x0_hat, alpha_bar_t);
  return forward_diffuse(x0_hat, alpha_bar_prev, eps);
}

Matrix ddim_step(const Matrix& x_t, const Matrix& x0_hat, std::size_t t, std::size_t t_prev, const NoiseSchedule& s) {
  require(t >= 1 && t < s.steps && t_prev < t, ErrorKind::InvalidArgument, "ddim_step: need 0 <= t_prev < t < T");
  return ddim_step(x_t, x0_hat, s.alpha_bar[t], s.alpha_bar[t_prev]);
}

std::vector<std::size_t> sampling_steps(std::size_t steps, std::size_t stride) {
  require(stride >= 1, ErrorKind::InvalidArgument, "stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t t = steps - 1;; t -= std::min(stride, t)) {
    out.push_back(t);
    if (t == 0) break;
  }
  return out;
}

SampleResult sample_loop(const NoiseSchedule& s, const Matrix& x_start, const Predictor& predict, std::size_t stride) {
  const auto ts = sampling_steps(s.steps, stride);
  Matrix x = x_start;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const Matrix x0 = predict(x, ts[i]);
    x = ddim_step(x, x0, ts[i], ts[i + 1], s);
  }
  SampleResult r;
  r.x0_hat = predict(x, 0);
  r.final_state = std::move(x);
  return r;
}

std::vector<Matrix> invert_loop(const NoiseSchedule& s, const Matrix& x0, const Predictor& predict, std::size_t stride) {
  auto ts = sampling_steps(s.steps, stride);
  std::reverse(ts.begin(), ts.end());
  std::vector<Matrix> traj;
  traj.reserve(ts.size());
  traj.push_back(x0);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const Matrix& x = traj.back();
    const Matrix pred = predict(x, ts[i]);
    const Matrix eps = implied_noise(x, pred, s.alpha_bar[ts[i]]);
    traj.push_back(forward_diffuse(pred, s.alpha_bar[ts[i + 1]], eps));
  }
  return traj;
}

Matrix initial_noise(std::size_t frames, std::size_t features, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(frames, features);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

}  // namespace momo::diff
