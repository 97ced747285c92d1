#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "kbref/config.hpp"
#include "kbref/dataset.hpp"
#include "kbref/model.hpp"

namespace kbref {

struct EpochStat {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStat> curves;
  double best_val_loss = 0.0;
  int64_t best_epoch = -1;
};

// Seeded SGD loop: per-epoch shuffle, gradient accumulation over each batch
// (mean), plateau-halving LR schedule driven by the validation loss, and the
// best-validation checkpoint written to `checkpoint_path` (with its manifest)
// whenever the validation loss improves. A non-finite loss aborts with
// NumericError naming the epoch and sample. With an empty validation set the
// training loss drives the schedule.
TrainResult train(GroundingModel& model, const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& val_samples, const FeaturePack* features,
                  const RetrievalContext* retrieval, const TrainConfig& cfg,
                  const std::string& checkpoint_path,
                  const std::vector<std::pair<std::string, std::string>>& config_echo,
                  std::ostream* log = nullptr);

}  // namespace kbref
