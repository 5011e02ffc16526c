#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "momo/error.hpp"
#include "momo/tape.hpp"

namespace momo::num {
namespace {

double evaluate(const LossBuilder& loss_fn) {
  Tape tape(false);
  return loss_fn(tape).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  require(options.epsilon >= 1e-7 && options.epsilon <= 1e-4, ErrorKind::InvalidArgument,
          "grad_check epsilon must lie in [1e-7, 1e-4]");
  for (Parameter* p : params) p->zero_grad();
  double l0 = 0.0;
  {
    Tape tape(true);
    Var loss = loss_fn(tape);
    l0 = loss.value()(0, 0);
    tape.backward(loss);
  }
  const double l1 = evaluate(loss_fn);
  if (l0 != l1) fail(ErrorKind::Determinism, "loss function is not deterministic");

  struct Coord {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.push_back({p, i});
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
  }

  GradCheckReport report;
  const double eps = options.epsilon;
  for (const Coord& c : coords) {
    Parameter& p = *params[c.param];
    double& slot = p.value.data()[c.index];
    const double saved = slot;
    slot = saved + eps;
    const double fp = evaluate(loss_fn);
    slot = saved - eps;
    const double fm = evaluate(loss_fn);
    slot = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = p.grad.data()[c.index];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_param = p.name;
    }
    ++report.coords_checked;
  }
  return report;
}

}  // namespace momo::num
