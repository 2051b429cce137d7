#pragma once

#include "mld/mlp.hpp"

namespace mld {

// Compares mlp_backward against central differences of
// L = sum(output * upstream), with a fixed deterministic upstream.
// Returns the max over all parameters of |analytic - numeric| / (|analytic| + f),
// where f = kGradCheckRelativeFloor * max|analytic| (at least 1e-12).
inline constexpr double kGradCheckRelativeFloor = 1e-6;
double finite_diff_check(const MlpParams& params, const Tensor& input,
                         double h = 1e-5);
double finite_diff_check(const MlpParams& params, const Tensor& input,
                         const Tensor& upstream, double h);

}  // namespace mld
