#include "kbref/optimizer.hpp"

#include "kbref/errors.hpp"

namespace kbref {

OptimizerState sgd_epoch_end(OptimizerState state, double val_loss) {
  if (val_loss < state.best_val_loss) {
    state.best_val_loss = val_loss;
    state.plateau_count = 0;
    return state;
  }
  state.plateau_count += 1;
  if (state.plateau_count >= state.patience) {
    state.lr *= state.halving_factor;
    state.plateau_count = 0;
  }
  return state;
}

void SgdUpdater::step(const std::vector<ParamTensor*>& params, double lr, double grad_scale) {
  for (ParamTensor* p : params) {
    Tensor* vel = nullptr;
    if (cfg_.momentum != 0.0) {
      auto [it, inserted] = velocity_.try_emplace(p->name, Tensor(p->value.shape()));
      vel = &it->second;
    }
    for (int64_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i] * grad_scale + cfg_.weight_decay * p->value[i];
      if (vel) {
        (*vel)[i] = cfg_.momentum * (*vel)[i] + g;
        g = (*vel)[i];
      }
      p->value[i] -= lr * g;
    }
    if (!p->value.all_finite()) {
      throw NumericError("parameter '" + p->name + "' went non-finite during SGD update");
    }
  }
}

}  // namespace kbref
