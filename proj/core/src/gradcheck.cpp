#include "mld/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mld/error.hpp"

namespace mld {

namespace {
Tensor default_upstream(const MlpParams& params, const Tensor& input) {
  const std::size_t rows = input.rank() == 1 ? 1 : input.rows();
  Tensor up({rows, params.out_dim()});
  for (std::size_t i = 0; i < up.size(); ++i) {
    up[i] = std::cos(0.7 * static_cast<double>(i) + 0.3);
  }
  if (input.rank() == 1) return up.reshaped({params.out_dim()});
  return up;
}
}  // namespace

double finite_diff_check(const MlpParams& params, const Tensor& input,
                         double h) {
  return finite_diff_check(params, input, default_upstream(params, input), h);
}

double finite_diff_check(const MlpParams& params, const Tensor& input,
                         const Tensor& upstream, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: h must be positive");
  const auto analytic = mlp_backward(params, input, upstream);
  const auto grads = analytic.params.tensors();

  // Entries many orders below the largest gradient sit at the rounding floor
  // of the difference quotient, so the denominator is floored relative to it.
  double largest = 0.0;
  for (const auto* g : grads) {
    for (std::size_t i = 0; i < g->size(); ++i) largest = std::max(largest, std::abs((*g)[i]));
  }
  const double floor = std::max(kGradCheckRelativeFloor * largest, 1e-12);

  MlpParams probe = params;
  auto targets = probe.tensors();
  double worst = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    for (std::size_t i = 0; i < targets[k]->size(); ++i) {
      const double saved = (*targets[k])[i];
      (*targets[k])[i] = saved + h;
      const double plus = dot(mlp_forward(probe, input), upstream);
      (*targets[k])[i] = saved - h;
      const double minus = dot(mlp_forward(probe, input), upstream);
      (*targets[k])[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = (*grads[k])[i];
      worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + floor));
    }
  }
  return worst;
}

}  // namespace mld
