#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kbref/dataset.hpp"
#include "kbref/model.hpp"

namespace kbref {

struct SampleRecord {
  int64_t predicted = -1;
  int64_t target = -1;
  bool correct = false;
  bool has_gt_fact = false;
  bool gt_retrieved = false;                 // gt fact survived stage-1 retrieval
  std::optional<int64_t> fg_fact;            // final-pass argmax fact for the target candidate
  std::vector<int64_t> per_pass_argmax;      // same, for every pass
  bool fg_correct = false;
};

// Accuracy plus fact-grounding metrics. fg_accuracy counts samples whose
// final-pass attention argmax (on the target candidate) hits the annotated
// fact, over samples where that fact survived retrieval; the conditioned
// variant additionally requires the object prediction to be correct.
// gt_survival_rate reports how often the annotated fact survived retrieval
// at all, over samples that have one.
struct EvalReport {
  double accuracy = 0.0;
  std::optional<double> fg_accuracy;
  std::optional<double> fg_accuracy_conditioned;
  double gt_survival_rate = 0.0;
  int64_t total = 0;
  int64_t correct = 0;
  int64_t with_gt_fact = 0;
  int64_t gt_retrieved = 0;
  std::vector<SampleRecord> records;
};

using Scorer = std::function<ForwardResult(const Sample&)>;

Scorer model_scorer(const GroundingModel& model, const FeaturePack* features,
                    const RetrievalContext* retrieval);

// Deterministic regardless of `threads`: records land at their sample index.
EvalReport evaluate(const Scorer& scorer, const std::vector<Sample>& samples, int threads = 1);

// Uniform pick among each sample's candidates; returns the accuracy.
double random_baseline(const std::vector<Sample>& samples, uint64_t seed);

}  // namespace kbref
