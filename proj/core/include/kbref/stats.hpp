#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kbref/dataset.hpp"
#include "kbref/fact_store.hpp"

namespace kbref {

// Integer-valued histogram (token counts, candidate counts).
using CountHistogram = std::map<int64_t, int64_t>;

// Real-valued histogram binned as floor(x / bin_width).
struct BinnedHistogram {
  double bin_width = 0.1;
  std::map<int64_t, int64_t> counts;
};

struct StatsReport {
  int64_t n_expressions = 0;
  double mean_expression_length = 0.0;
  CountHistogram expression_length;
  CountHistogram candidates_per_sample;

  // Present when a fact store is supplied.
  std::optional<int64_t> n_facts;
  std::optional<double> mean_fact_length;
  CountHistogram fact_length;
  std::map<std::string, double> kb_source_percent;

  // Cosine between each expression and its annotated fact, over a TF-IDF
  // model fit on expressions plus facts. Needs store + gt ids.
  BinnedHistogram expression_fact_similarity;
  std::optional<double> mean_expression_fact_similarity;
};

StatsReport corpus_stats(const std::vector<Sample>& samples, const FactStore* store);

}  // namespace kbref
