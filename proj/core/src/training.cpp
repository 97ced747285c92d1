#include "kbref/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "kbref/checkpoint.hpp"
#include "kbref/errors.hpp"
#include "kbref/graph.hpp"
#include "kbref/optimizer.hpp"
#include "kbref/rng.hpp"

namespace kbref {

namespace {

double dataset_loss(const GroundingModel& model, const std::vector<Sample>& samples,
                    const FeaturePack* features, const RetrievalContext* retrieval,
                    const TrainConfig& cfg, Graph& g) {
  double total = 0.0;
  for (const Sample& s : samples) {
    g.reset();
    Var loss = model.loss(g, s, features, retrieval, cfg.fact_supervision, cfg.lambda_fact);
    total += g.value(loss)[0];
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(GroundingModel& model, const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& val_samples, const FeaturePack* features,
                  const RetrievalContext* retrieval, const TrainConfig& cfg,
                  const std::string& checkpoint_path,
                  const std::vector<std::pair<std::string, std::string>>& config_echo,
                  std::ostream* log) {
  if (train_samples.empty()) throw DataError("train: no training samples");
  if (cfg.batch < 1) throw UsageError("train: batch must be >= 1");

  OptimizerState opt;
  opt.lr = cfg.lr;
  SgdUpdater updater(SgdConfig{cfg.momentum, cfg.weight_decay});
  std::vector<ParamTensor*> params = model.params().all();

  std::vector<size_t> order(train_samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  Graph graph;

  TrainResult result;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(cfg.seed, "epoch_shuffle_" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      size_t batch_end = std::min(pos + static_cast<size_t>(cfg.batch), order.size());
      model.params().zero_grad();
      int64_t batch_count = 0;
      for (size_t b = pos; b < batch_end; ++b) {
        const Sample& s = train_samples[order[b]];
        Graph& g = graph;
        g.reset();
        Var loss = model.loss(g, s, features, retrieval, cfg.fact_supervision, cfg.lambda_fact);
        double lv = g.value(loss)[0];
        if (!std::isfinite(lv)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(order[b]));
        }
        epoch_loss += lv;
        g.backward(loss);
        ++batch_count;
      }
      updater.step(params, opt.lr, 1.0 / static_cast<double>(batch_count));
      pos = batch_end;
    }
    epoch_loss /= static_cast<double>(train_samples.size());

    double val_loss = val_samples.empty()
                          ? epoch_loss
                          : dataset_loss(model, val_samples, features, retrieval, cfg, graph);
    if (!std::isfinite(val_loss)) {
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }

    EpochStat stat{epoch, epoch_loss, val_loss, opt.lr};
    result.curves.push_back(stat);
    if (log) {
      (*log) << "epoch " << epoch << " train_loss " << epoch_loss << " val_loss " << val_loss
             << " lr " << opt.lr << "\n";
    }

    if (result.best_epoch < 0 || val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      if (!checkpoint_path.empty()) {
        save_checkpoint(checkpoint_path, model, config_echo);
      }
    }
    opt = sgd_epoch_end(opt, val_loss);
  }
  return result;
}

}  // namespace kbref
