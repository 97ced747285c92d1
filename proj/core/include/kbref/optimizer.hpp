#pragma once

#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbref/params.hpp"

namespace kbref {

// Plateau-halving learning rate schedule: the rate is halved when the
// validation loss has failed to improve the best value for `patience`
// consecutive epoch ends; the counter resets on improvement.
struct OptimizerState {
  double lr = 1e-4;
  double halving_factor = 0.5;
  int patience = 2;
  int plateau_count = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

OptimizerState sgd_epoch_end(OptimizerState state, double val_loss);

struct SgdConfig {
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// Plain SGD over a ParamStore. Gradients are scaled by `grad_scale` (e.g.
// 1/batch for accumulated batches) before the update.
class SgdUpdater {
 public:
  explicit SgdUpdater(SgdConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<ParamTensor*>& params, double lr, double grad_scale = 1.0);

 private:
  SgdConfig cfg_;
  std::unordered_map<std::string, Tensor> velocity_;
};

}  // namespace kbref
