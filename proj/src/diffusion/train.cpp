#include <cmath>
#include <random>
#include <string>

#include "momo/diffusion.hpp"
#include "momo/error.hpp"
#include "momo/optim.hpp"

namespace momo::diff {

std::vector<double> train(model::Denoiser& m, const NoiseSchedule& s, const std::vector<TrainExample>& data,
                          const TrainConfig& cfg, const TrainCallback& on_step) {
  require(!data.empty(), ErrorKind::InvalidArgument, "train: empty corpus");
  require(cfg.batch >= 1, ErrorKind::InvalidArgument, "train: batch must be >= 1");
  require(cfg.cond_dropout >= 0.0 && cfg.cond_dropout < 1.0, ErrorKind::InvalidArgument,
          "train: condition dropout must be in [0, 1)");
  require(s.steps == m.config().steps, ErrorKind::InvalidArgument, "train: schedule length differs from the model's T");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<std::size_t> step_pick(0, s.steps - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t null_id[] = {model::Vocabulary::kNull};

  auto params = m.parameters();
  num::AdamState state;
  std::vector<double> curve;
  curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    num::Tape tape;
    std::vector<num::Var> losses;
    try {
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const TrainExample& ex = data[pick(rng)];
        const std::size_t t = step_pick(rng);
        Matrix noise(ex.x0.rows(), ex.x0.cols());
        for (double& v : noise.values()) v = nd(rng);
        const bool drop = coin(rng) < cfg.cond_dropout;
        const Matrix xt = forward_diffuse(ex.x0, s, t, noise);
        std::span<const std::size_t> ids = drop ? std::span<const std::size_t>(null_id) : std::span(ex.ids);
        num::Var pred = m.forward(tape, xt, t, ids);
        losses.push_back(num::mse(pred, tape.constant(ex.x0)));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      fail(ErrorKind::NonFinite, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    num::Var total = num::scale(num::sum_scalars(losses), 1.0 / static_cast<double>(cfg.batch));
    const double loss = total.value()(0, 0);
    if (!std::isfinite(loss)) fail(ErrorKind::NonFinite, "training loss is non-finite at step " + std::to_string(step));
    tape.backward(total);
    num::AdamConfig ac;
    const double frac = cfg.steps > 1 ? static_cast<double>(step) / static_cast<double>(cfg.steps - 1) : 0.0;
    ac.lr = cfg.lr + (cfg.lr_final - cfg.lr) * frac;
    num::adam_step(params, state, ac);
    curve.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return curve;
}

}  // namespace momo::diff
