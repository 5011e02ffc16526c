#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "momo/diffusion.hpp"
#include "momo/error.hpp"

using namespace momo;
using namespace momo::diff;

namespace {

Matrix noise(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

model::DenoiserConfig small_config() {
  model::DenoiserConfig c;
  c.layers = 2;
  c.latent = 16;
  c.heads = 2;
  c.ff = 32;
  c.steps = 20;
  return c;
}

}  // namespace

TEST_CASE("cosine schedule") {
  for (std::size_t t_count : {10u, 100u, 1000u}) {
    const NoiseSchedule s = build_schedule(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      CHECK(s.alpha[t] > 0.0);
      CHECK(s.alpha[t] < 1.0);
      if (t > 0) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
    CHECK(s.alpha_bar[0] == doctest::Approx(s.alpha[0]));
    const NoiseSchedule lin = build_schedule(t_count, ScheduleKind::Linear);
    for (std::size_t t = 1; t < t_count; ++t) CHECK(lin.alpha_bar[t] < lin.alpha_bar[t - 1]);
  }
  const NoiseSchedule s = build_schedule(100);
  CHECK(s.alpha[0] > 0.999);
  // closed form at step 50 (covers the curve at t+1 = 51)
  auto f = [](double t) {
    const double c = std::cos((t / 100.0 + 0.008) / 1.008 * std::numbers::pi / 2.0);
    return c * c;
  };
  CHECK(std::abs(s.alpha_bar[50] - f(51.0) / f(0.0)) < 1e-12);
  CHECK_THROWS_AS(build_schedule(1), Error);
  CHECK_THROWS_AS(parse_schedule_kind("quadratic"), Error);
  CHECK(parse_schedule_kind("linear") == ScheduleKind::Linear);
}

TEST_CASE("forward_diffuse") {
  const Matrix x0 = noise(3, 4, 1);
  const Matrix eps = noise(3, 4, 2);
  CHECK(forward_diffuse(x0, 1.0, eps) == x0);
  CHECK(forward_diffuse(x0, 0.0, eps) == eps);
  CHECK_THROWS_AS(forward_diffuse(x0, 0.5, Matrix(2, 4)), Error);

  // Monte-Carlo moments of x_t for a fixed x0
  const NoiseSchedule s = build_schedule(100);
  const std::size_t t = 40, draws = 10000;
  const double ab = s.alpha_bar[t];
  const Matrix one = Matrix{{0.7, -1.3}};
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  for (std::size_t i = 0; i < draws; ++i) {
    const Matrix e = Matrix{{nd(rng), nd(rng)}};
    const Matrix x = forward_diffuse(one, s, t, e);
    for (int c = 0; c < 2; ++c) {
      sum[c] += x(0, c);
      sq[c] += x(0, c) * x(0, c);
    }
  }
  for (int c = 0; c < 2; ++c) {
    const double mean = sum[c] / draws;
    const double var = sq[c] / draws - mean * mean;
    const double expect_var = 1.0 - ab;
    const double se_mean = std::sqrt(expect_var / draws);
    const double se_var = expect_var * std::sqrt(2.0 / (draws - 1));
    CHECK(std::abs(mean - std::sqrt(ab) * one(0, c)) <= 3.0 * se_mean);
    CHECK(std::abs(var - expect_var) <= 3.0 * se_var);
  }
}

TEST_CASE("guide") {
  const Matrix c = noise(2, 3, 1), u = noise(2, 3, 2);
  CHECK(max_abs_diff(guide(c, u, 1.0), c) == 0.0);
  CHECK(guide(c, u, 0.0) == u);
  const Matrix g = guide(c, u, 2.5);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(std::abs(g.values()[i] - (u.values()[i] + 2.5 * (c.values()[i] - u.values()[i]))) < 1e-15);
}

TEST_CASE("ddim_step") {
  const NoiseSchedule s = build_schedule(50);
  const Matrix xt = noise(4, 3, 3), x0 = noise(4, 3, 4);
  CHECK(ddim_step(xt, x0, 0.4, 0.4) == xt);
  const Matrix y = ddim_step(xt, x0, 10, 9, s);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = s.alpha_bar[10], b = s.alpha_bar[9];
    const double eps = (xt.values()[i] - std::sqrt(a) * x0.values()[i]) / std::sqrt(1.0 - a);
    CHECK(std::abs(y.values()[i] - (std::sqrt(b) * x0.values()[i] + std::sqrt(1.0 - b) * eps)) < 1e-14);
  }
  CHECK_THROWS_AS(ddim_step(xt, x0, 1.0, 0.9), Error);
  CHECK_THROWS_AS(ddim_step(xt, x0, 0, 0, s), Error);

  // A predictor that knows the answer lands on it from pure noise.
  const Matrix truth = noise(6, 5, 5);
  const Predictor oracle = [&](const Matrix&, std::size_t) { return truth; };
  for (std::size_t stride : {1u, 3u}) {
    const SampleResult r = sample_loop(s, noise(6, 5, 6), oracle, stride);
    CHECK(max_abs_diff(r.x0_hat, truth) <= 1e-9);
    CHECK(max_abs_diff(ddim_step(r.final_state, truth, s.alpha_bar[0], 1.0), truth) <= 1e-9);
  }
}

TEST_CASE("sampling_steps") {
  CHECK(sampling_steps(5, 1) == std::vector<std::size_t>{4, 3, 2, 1, 0});
  CHECK(sampling_steps(10, 4) == std::vector<std::size_t>{9, 5, 1, 0});
  CHECK_THROWS_AS(sampling_steps(10, 0), Error);
}

TEST_CASE("inversion with a constant predictor is exact") {
  const NoiseSchedule s = build_schedule(100);
  const Matrix c = noise(7, 4, 7);
  const Matrix x = noise(7, 4, 8);
  const Predictor constant = [&](const Matrix&, std::size_t) { return c; };
  for (std::size_t stride : {1u, 7u}) {
    const auto traj = invert_loop(s, x, constant, stride);
    CHECK(traj.size() == sampling_steps(100, stride).size());
    const SampleResult r = sample_loop(s, traj.back(), constant, stride);
    CHECK(max_abs_diff(r.final_state, x) <= 1e-9);
  }
}

TEST_CASE("guidance 1 ignores the unconditional branch") {
  model::Denoiser m(small_config(), 3);
  const NoiseSchedule s = build_schedule(20);
  SamplerConfig cfg;
  cfg.guidance = 1.0;
  cfg.seed = 4;
  const SampleResult a = sample(m, s, "a person walks", 6, cfg);
  const auto cond = m.encode_prompt("a person walks");
  const SampleResult b = sample_loop(s, initial_noise(6, 95, 4), [&](const Matrix& x, std::size_t t) {
    return m.denoise(x, t, cond);
  });
  CHECK(max_abs_diff(a.x0_hat, b.x0_hat) <= 1e-9);
}

TEST_CASE("sampling determinism and explicit start") {
  model::Denoiser m(small_config(), 3);
  const NoiseSchedule s = build_schedule(20);
  SamplerConfig cfg;
  cfg.seed = 9;
  const SampleResult a = sample(m, s, "a person runs", 5, cfg);
  const SampleResult b = sample(m, s, "a person runs", 5, cfg);
  CHECK(a.x0_hat == b.x0_hat);
  const Matrix start = noise(5, 95, 1);
  SamplerConfig other = cfg;
  other.seed = 123;
  CHECK(sample(m, s, "a person runs", 5, cfg, start).x0_hat == sample(m, s, "a person runs", 5, other, start).x0_hat);
  CHECK(!(sample(m, s, "a person runs", 5, other).x0_hat == a.x0_hat));
}

TEST_CASE("training") {
  const NoiseSchedule s = build_schedule(20);
  SUBCASE("single-sample corpus overfits") {
    model::Denoiser m(small_config(), 5);
    const std::vector<TrainExample> data = {{noise(8, 95, 1), m.vocabulary().tokenize("a person walks")}};
    TrainConfig cfg;
    cfg.steps = 500;
    cfg.batch = 4;
    cfg.lr = 3e-3;
    cfg.lr_final = 3e-4;
    cfg.seed = 2;
    const auto curve = train(m, s, data, cfg);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 10; ++i) first += curve[i] / 10.0;
    for (std::size_t i = curve.size() - 50; i < curve.size(); ++i) last += curve[i] / 50.0;
    CHECK(last < 0.1 * first);
  }
  SUBCASE("no dropout leaves the null embedding untouched") {
    model::Denoiser m(small_config(), 5);
    const Matrix before = m.parameter("tok_emb").value;
    const std::vector<TrainExample> data = {{noise(4, 95, 1), m.vocabulary().tokenize("a person walks")}};
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.cond_dropout = 0.0;
    train(m, s, data, cfg);
    const Matrix& after = m.parameter("tok_emb").value;
    for (std::size_t c = 0; c < after.cols(); ++c) CHECK(after(model::Vocabulary::kNull, c) == before(model::Vocabulary::kNull, c));
    CHECK(frobenius_norm(m.parameter("tok_emb").grad.rows_slice(1, 2)) == 0.0);
  }
  SUBCASE("fixed seed gives a bitwise-identical curve") {
    const std::vector<TrainExample> data = {{noise(4, 95, 1), {2, 3, 4}}, {noise(4, 95, 2), {2, 3, 5}}};
    TrainConfig cfg;
    cfg.steps = 8;
    cfg.cond_dropout = 0.5;
    model::Denoiser a(small_config(), 5), b(small_config(), 5);
    CHECK(train(a, s, data, cfg) == train(b, s, data, cfg));
  }
  SUBCASE("non-finite loss aborts with the step index") {
    model::Denoiser m(small_config(), 5);
    Matrix bad = noise(4, 95, 1);
    bad(0, 0) = std::nan("");
    TrainConfig cfg;
    cfg.steps = 3;
    try {
      train(m, s, {{bad, {2}}}, cfg);
      FAIL("expected non-finite error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NonFinite);
      CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
  }
}
