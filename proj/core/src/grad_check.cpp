#include "oodf/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oodf/error.hpp"

namespace oodf {

GradCheckReport grad_check(Graph& graph, const NamedTensors& inputs, NodeId loss,
                           double tolerance, const GradCheckOptions& options) {
  if (!(tolerance > 0)) throw ValueError("grad_check: tolerance must be positive");
  ParameterSet& params = graph.parameters();
  for (const Parameter& p : params) {
    if (!p.value.all_finite()) throw NumericError("grad_check: parameter '" + p.name + "'");
  }

  params.zero_grad();
  graph.forward(inputs);
  graph.backward(loss);
  std::vector<Tensor> analytic;
  for (const Parameter& p : params) analytic.push_back(p.grad);
  params.zero_grad();

  const auto loss_at = [&]() { graph.forward(inputs); return graph.value(loss)[0]; };

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    if (!p.requires_grad) continue;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    ParamGradError entry{p.name};
    for (std::size_t c : coords) {
      const double original = p.value[c];
      p.value[c] = original + options.step;
      const double up = loss_at();
      p.value[c] = original - options.step;
      const double down = loss_at();
      p.value[c] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
      entry.max_relative_error = std::max(entry.max_relative_error, std::abs(a - numeric) / denom);
      ++entry.coords_checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.params.push_back(std::move(entry));
  }
  graph.forward(inputs);
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace oodf
