#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ulma/error.hpp"
#include "ulma/model/layers.hpp"
#include "ulma/random.hpp"

namespace ulma::model {

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t max_entries = 0;  // 0 checks every entry, otherwise a seeded random subset
  std::uint64_t seed = 0;
  double abs_tol = 0.0;  // absolute disagreement at or below this counts as exact
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

/// Compares analytic gradients with central differences.
/// `objective(true)` must zero the gradients of `params`, run forward and backward, and return
/// the loss; `objective(false)` only evaluates the loss.
template <class Objective>
GradCheckResult grad_check(const ParamList& params, Objective&& objective, const GradCheckOptions& opt = {}) {
  const double base = objective(true);
  if (!std::isfinite(base)) throw Error(Errc::NonFiniteLoss, "loss is not finite at the check point");

  struct Entry {
    std::size_t param, index;
    double analytic;
  };
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) entries.push_back({p, i, params[p]->grad.data()[i]});

  if (opt.max_entries != 0 && entries.size() > opt.max_entries) {
    Rng rng(opt.seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(opt.max_entries);
  }

  GradCheckResult res;
  for (const Entry& e : entries) {
    double& v = params[e.param]->value.data()[e.index];
    const double saved = v;
    v = saved + opt.eps;
    const double fp = objective(false);
    v = saved - opt.eps;
    const double fm = objective(false);
    v = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error(Errc::NonFiniteLoss, "loss not finite under perturbation");
    const double fd = (fp - fm) / (2.0 * opt.eps);
    const double diff = std::abs(e.analytic - fd);
    const double rel = diff <= opt.abs_tol ? 0.0 : diff / std::max(1e-8, std::abs(e.analytic) + std::abs(fd));
    ++res.checked;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = params[e.param]->name;
      res.worst_index = e.index;
    }
  }
  return res;
}

}  // namespace ulma::model
