#pragma once

#include <functional>
#include <span>
#include <string>

#include "kbref/params.hpp"

namespace kbref {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coords_checked = 0;
};

// Central-difference verification of analytic gradients.
//
// loss_fn(true) must compute the loss and accumulate analytic gradients into
// the params' grad buffers (which this function zeroes first); loss_fn(false)
// must be the pure value-only evaluation at the current parameter values.
// Each coordinate is perturbed by +/-eps and the relative error is
//   |analytic - numeric| / max(1, |analytic|, |numeric|),
// i.e. absolute for small gradients, relative for large ones. The report
// carries the worst coordinate. Throws NumericError on a non-finite loss.
GradCheckReport finite_diff_check(const std::function<double(bool)>& loss_fn,
                                  std::span<ParamTensor* const> params, double eps = 1e-5);

// Partitions the store's tensor names into `shards` groups balanced by
// coordinate count, for running independent finite_diff_check calls (one
// model replica each) in parallel. Deterministic.
std::vector<std::vector<std::string>> shard_param_names(const ParamStore& store, int shards);

GradCheckReport merge_reports(const std::vector<GradCheckReport>& reports);

}  // namespace kbref
