#include "kbref/stats.hpp"

#include <cmath>

#include "kbref/text_analysis.hpp"

namespace kbref {

StatsReport corpus_stats(const std::vector<Sample>& samples, const FactStore* store) {
  StatsReport r;
  r.n_expressions = static_cast<int64_t>(samples.size());

  int64_t token_total = 0;
  for (const Sample& s : samples) {
    int64_t len = static_cast<int64_t>(s.tokens.size());
    token_total += len;
    r.expression_length[len] += 1;
    r.candidates_per_sample[static_cast<int64_t>(s.candidates.size())] += 1;
  }
  if (r.n_expressions > 0) {
    r.mean_expression_length =
        static_cast<double>(token_total) / static_cast<double>(r.n_expressions);
  }

  if (!store) return r;

  r.n_facts = store->size();
  int64_t fact_tokens = 0;
  std::map<std::string, int64_t> by_source;
  for (const auto& [_, f] : store->facts()) {
    int64_t len = static_cast<int64_t>(f.tokens.size());
    fact_tokens += len;
    r.fact_length[len] += 1;
    by_source[to_string(f.source)] += 1;
  }
  if (*r.n_facts > 0) {
    r.mean_fact_length = static_cast<double>(fact_tokens) / static_cast<double>(*r.n_facts);
    for (const auto& [src, count] : by_source) {
      r.kb_source_percent[src] =
          100.0 * static_cast<double>(count) / static_cast<double>(*r.n_facts);
    }
  }

  // Expression <-> annotated-fact similarity over a shared TF-IDF fit.
  std::vector<std::vector<std::string>> docs;
  docs.reserve(samples.size() + static_cast<size_t>(store->size()));
  for (const Sample& s : samples) docs.push_back(s.tokens);
  for (const auto& [_, f] : store->facts()) docs.push_back(f.tokens);
  TfIdfModel model = TfIdfModel::fit(docs);

  double sim_total = 0.0;
  int64_t sim_count = 0;
  for (const Sample& s : samples) {
    if (!s.gt_fact_id || !store->has_fact(*s.gt_fact_id)) continue;
    double sim = cosine(model.vector(s.tokens), model.vector(store->fact(*s.gt_fact_id).tokens));
    int64_t bin = static_cast<int64_t>(std::floor(sim / r.expression_fact_similarity.bin_width));
    r.expression_fact_similarity.counts[bin] += 1;
    sim_total += sim;
    ++sim_count;
  }
  if (sim_count > 0) {
    r.mean_expression_fact_similarity = sim_total / static_cast<double>(sim_count);
  }
  return r;
}

}  // namespace kbref
