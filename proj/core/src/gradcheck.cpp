#include "kbref/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "kbref/errors.hpp"

namespace kbref {

std::vector<std::vector<std::string>> shard_param_names(const ParamStore& store, int shards) {
  if (shards < 1) shards = 1;
  std::vector<std::vector<std::string>> names(static_cast<size_t>(shards));
  std::vector<int64_t> load(static_cast<size_t>(shards), 0);
  for (const ParamTensor* p : store.all()) {
    size_t lightest = 0;
    for (size_t s = 1; s < load.size(); ++s) {
      if (load[s] < load[lightest]) lightest = s;
    }
    names[lightest].push_back(p->name);
    load[lightest] += p->value.size();
  }
  return names;
}

GradCheckReport merge_reports(const std::vector<GradCheckReport>& reports) {
  GradCheckReport out;
  for (const GradCheckReport& r : reports) {
    out.coords_checked += r.coords_checked;
    if (r.max_rel_error > out.max_rel_error) {
      out.max_rel_error = r.max_rel_error;
      out.worst_param = r.worst_param;
      out.worst_index = r.worst_index;
      out.worst_analytic = r.worst_analytic;
      out.worst_numeric = r.worst_numeric;
    }
  }
  return out;
}

GradCheckReport finite_diff_check(const std::function<double(bool)>& loss_fn,
                                  std::span<ParamTensor* const> params, double eps) {
  for (ParamTensor* p : params) p->grad.fill(0.0);
  double base = loss_fn(true);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: non-finite loss");

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (ParamTensor* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor* p = params[pi];
    for (int64_t i = 0; i < p->value.size(); ++i) {
      double saved = p->value[i];
      p->value[i] = saved + eps;
      double up = loss_fn(false);
      p->value[i] = saved - eps;
      double down = loss_fn(false);
      p->value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: non-finite loss while perturbing '" + p->name +
                           "'");
      }
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[pi][i];
      double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p->name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace kbref
