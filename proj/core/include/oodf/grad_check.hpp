#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oodf/graph.hpp"

namespace oodf {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per parameter; 0 probes every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is ~0 are judged on absolute error.
  double magnitude_floor = 1e-6;
};

struct ParamGradError {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Compares backward() against central finite differences of the scalar
/// `loss` node, per parameter. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, magnitude_floor).
/// Parameter values are restored and gradients left zeroed afterwards.
GradCheckReport grad_check(Graph& graph, const NamedTensors& inputs, NodeId loss,
                           double tolerance, const GradCheckOptions& options = {});

}  // namespace oodf
