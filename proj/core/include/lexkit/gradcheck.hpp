// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lexkit/optimizer.hpp"
#include "lexkit/rng.hpp"

namespace lexkit::nn {

/// Central finite-difference check of the analytic gradients stored in the
/// parameters. `loss_fn` must re-run the forward pass at the current
/// parameter values (dropout off, masking fixed); each param's .grad must
/// already hold the reverse-mode gradient at those values.
///
/// Checks a random subsample of at least `min_coords` coordinates (all of
/// them when the model is smaller). Throws if two evaluations of loss_fn at
/// the same point disagree, since finite differences are meaningless then.
/// Returns the max relative error |g_fd - g_an| / max(|g_fd|, |g_an|, tiny).
double grad_check(const std::function<double()>& loss_fn, const std::vector<Parameter*>& params,
                  Rng& rng, double eps = 1e-4, std::int64_t min_coords = 200);

}  // namespace lexkit::nn
