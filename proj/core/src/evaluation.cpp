#include "kbref/evaluation.hpp"

#include <algorithm>
#include <thread>

#include "kbref/errors.hpp"
#include "kbref/rng.hpp"

namespace kbref {

Scorer model_scorer(const GroundingModel& model, const FeaturePack* features,
                    const RetrievalContext* retrieval) {
  return [&model, features, retrieval](const Sample& s) {
    return model.forward(s, features, retrieval);
  };
}

namespace {

SampleRecord record_for(const Sample& sample, const ForwardResult& fwd) {
  SampleRecord rec;
  rec.predicted = fwd.predicted;
  rec.target = sample.target_index;
  rec.correct = rec.predicted == rec.target;
  rec.has_gt_fact = sample.gt_fact_id.has_value();

  const size_t t = static_cast<size_t>(sample.target_index);
  if (t < fwd.trace.fact_ids.size() && !fwd.trace.fact_ids[t].empty() &&
      !fwd.trace.fact_alphas[t].empty()) {
    const auto& ids = fwd.trace.fact_ids[t];
    for (const Tensor& alpha : fwd.trace.fact_alphas[t]) {
      int64_t best = 0;
      for (int64_t k = 1; k < static_cast<int64_t>(ids.size()); ++k) {
        if (alpha[k] > alpha[best]) best = k;
      }
      rec.per_pass_argmax.push_back(ids[static_cast<size_t>(best)]);
    }
    rec.fg_fact = rec.per_pass_argmax.back();
    if (rec.has_gt_fact) {
      rec.gt_retrieved = std::find(ids.begin(), ids.end(), *sample.gt_fact_id) != ids.end();
      rec.fg_correct = rec.gt_retrieved && *rec.fg_fact == *sample.gt_fact_id;
    }
  }
  return rec;
}

}  // namespace

EvalReport evaluate(const Scorer& scorer, const std::vector<Sample>& samples, int threads) {
  EvalReport report;
  report.total = static_cast<int64_t>(samples.size());
  report.records.resize(samples.size());

  auto work = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      report.records[i] = record_for(samples[i], scorer(samples[i]));
    }
  };

  if (threads <= 1 || samples.size() < 2) {
    work(0, samples.size());
  } else {
    size_t n_workers = std::min<size_t>(static_cast<size_t>(threads), samples.size());
    std::vector<std::thread> pool;
    size_t chunk = (samples.size() + n_workers - 1) / n_workers;
    for (size_t w = 0; w < n_workers; ++w) {
      size_t begin = w * chunk;
      size_t end = std::min(begin + chunk, samples.size());
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }

  int64_t fg_hits = 0, fg_cond_hits = 0, cond_total = 0;
  for (const SampleRecord& rec : report.records) {
    if (rec.correct) ++report.correct;
    if (rec.has_gt_fact) {
      ++report.with_gt_fact;
      if (rec.gt_retrieved) {
        ++report.gt_retrieved;
        if (rec.fg_correct) ++fg_hits;
        if (rec.correct) {
          ++cond_total;
          if (rec.fg_correct) ++fg_cond_hits;
        }
      }
    }
  }
  report.accuracy = report.total > 0
                        ? static_cast<double>(report.correct) / static_cast<double>(report.total)
                        : 0.0;
  if (report.with_gt_fact > 0) {
    report.gt_survival_rate =
        static_cast<double>(report.gt_retrieved) / static_cast<double>(report.with_gt_fact);
  }
  if (report.gt_retrieved > 0) {
    report.fg_accuracy = static_cast<double>(fg_hits) / static_cast<double>(report.gt_retrieved);
  }
  if (cond_total > 0) {
    report.fg_accuracy_conditioned =
        static_cast<double>(fg_cond_hits) / static_cast<double>(cond_total);
  }
  return report;
}

double random_baseline(const std::vector<Sample>& samples, uint64_t seed) {
  if (samples.empty()) return 0.0;
  Rng rng(Rng::derive(seed, "random_baseline"));
  int64_t correct = 0;
  for (const Sample& s : samples) {
    int64_t pick = static_cast<int64_t>(rng.below(s.candidates.size()));
    if (pick == s.target_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace kbref
