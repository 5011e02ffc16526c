#include <cmath>

#include "momo/error.hpp"
#include "momo/optim.hpp"

namespace momo::num {

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, const AdamConfig& cfg) {
  require(params.size() == grads.size(), ErrorKind::InvalidArgument, "adam: params/grads count mismatch");
  if (state.m.empty() && state.step == 0) {
    for (const Matrix& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::InvalidArgument,
          "adam: state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i].same_shape(grads[i]) && params[i].same_shape(state.m[i]) && params[i].same_shape(state.v[i]),
            ErrorKind::InvalidArgument, "adam: shape mismatch at tensor " + std::to_string(i));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const double* g = grads[i].data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg) {
  std::vector<Matrix> values;
  std::vector<Matrix> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Parameter* p : params) {
    values.push_back(std::move(p->value));
    grads.push_back(p->grad);
  }
  try {
    adam_step(std::span<Matrix>(values), std::span<const Matrix>(grads), state, cfg);
  } catch (...) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
    throw;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
}

}  // namespace momo::num
