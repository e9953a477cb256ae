#pragma once

#include <cstdint>
#include <vector>

#include "oodf/graph.hpp"

namespace oodf {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for every parameter of one ParameterSet, in set order.
struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ParameterSet& params, AdamOptions opts);
};

/// One bias-corrected Adam update using the gradients stored in `params`.
/// Parameters with requires_grad == false are left untouched. Nothing is
/// modified if any gradient is non-finite.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace oodf
