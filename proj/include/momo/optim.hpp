#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "momo/matrix.hpp"
#include "momo/tape.hpp"

namespace momo::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

// One Adam update. State moments are created on first use; shapes of params,
// grads and an existing state must agree.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state, const AdamConfig& cfg);
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& cfg);

}  // namespace momo::num
