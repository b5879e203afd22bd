// SPDX-License-Identifier: Apache-2.0
#include "lexkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace lexkit::nn {

double grad_check(const std::function<double()>& loss_fn, const std::vector<Parameter*>& params,
                  Rng& rng, double eps, std::int64_t min_coords) {
  double l0 = loss_fn();
  double l1 = loss_fn();
  if (l0 != l1) throw std::runtime_error("grad_check: loss function is not deterministic");

  std::int64_t total = 0;
  for (const Parameter* p : params) total += p->value.size();
  if (total == 0) throw std::invalid_argument("grad_check: no parameters");

  // Global flat coordinate space across all params.
  std::vector<std::int64_t> coords;
  if (total <= min_coords) {
    coords.resize(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  } else {
    std::set<std::int64_t> picked;
    while (static_cast<std::int64_t>(picked.size()) < min_coords)
      picked.insert(static_cast<std::int64_t>(rng.uniform(static_cast<std::uint64_t>(total))));
    coords.assign(picked.begin(), picked.end());
  }

  double max_rel = 0.0;
  for (std::int64_t flat : coords) {
    std::int64_t remain = flat;
    Parameter* owner = nullptr;
    for (Parameter* p : params) {
      if (remain < p->value.size()) {
        owner = p;
        break;
      }
      remain -= p->value.size();
    }
    double saved = owner->value[remain];
    owner->value[remain] = saved + eps;
    double fp = loss_fn();
    owner->value[remain] = saved - eps;
    double fm = loss_fn();
    owner->value[remain] = saved;

    double g_fd = (fp - fm) / (2.0 * eps);
    double g_an = owner->grad[remain];
    double rel = std::abs(g_fd - g_an) / std::max({std::abs(g_fd), std::abs(g_an), 1e-12});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace lexkit::nn
