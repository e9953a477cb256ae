#include "oodf/adam.hpp"

#include <cmath>

#include "oodf/error.hpp"

namespace oodf {

namespace {

void validate(const AdamOptions& o) {
  if (!(o.learning_rate > 0) || !(o.epsilon > 0)) {
    throw ValueError("adam: learning rate and epsilon must be positive");
  }
  if (!(o.beta1 > 0 && o.beta1 < 1) || !(o.beta2 > 0 && o.beta2 < 1)) {
    throw ValueError("adam: beta1 and beta2 must lie in (0, 1)");
  }
}

}  // namespace

AdamState::AdamState(const ParameterSet& params, AdamOptions opts) : options(opts) {
  validate(options);
  for (const Parameter& p : params) {
    first_moment.emplace_back(p.value.shape());
    second_moment.emplace_back(p.value.shape());
  }
}

void adam_step(ParameterSet& params, AdamState& state) {
  validate(state.options);
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, set has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (p.grad.shape() != p.value.shape() || state.first_moment[i].shape() != p.value.shape() ||
        state.second_moment[i].shape() != p.value.shape()) {
      throw ShapeError("adam: shape mismatch for parameter '" + p.name + "'");
    }
    if (p.requires_grad && !p.grad.all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.requires_grad) continue;
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.value[j] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace oodf
