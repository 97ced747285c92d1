#include "kbref/nn.hpp"

#include <array>
#include <cmath>

#include "kbref/errors.hpp"

namespace kbref {

Tensor softmax(const Tensor& v) { return softmax_masked(v, v.size()); }

Tensor softmax_masked(const Tensor& v, int64_t valid_count) {
  if (v.rank() != 1 || v.size() < 1) throw ShapeError("softmax: need a non-empty vector");
  if (valid_count < 1 || valid_count > v.size()) throw ShapeError("softmax: bad valid_count");
  Tensor out({v.size()});
  double mx = v[0];
  for (int64_t i = 1; i < valid_count; ++i) mx = std::max(mx, v[i]);
  double z = 0.0;
  for (int64_t i = 0; i < valid_count; ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (int64_t i = 0; i < valid_count; ++i) out[i] /= z;
  return out;
}

double cross_entropy(const Tensor& probs, int64_t target) {
  if (probs.rank() != 1) throw ShapeError("cross_entropy: probabilities must be rank 1");
  if (target < 0 || target >= probs.size()) {
    throw DataError("cross_entropy: target out of range");
  }
  return -std::log(std::max(probs[target], 1e-12));
}

double binary_cross_entropy(const Tensor& weights, const Tensor& target_onehot) {
  if (!weights.same_shape(target_onehot) || weights.rank() != 1) {
    throw ShapeError("binary_cross_entropy: shape mismatch");
  }
  double acc = 0.0;
  for (int64_t i = 0; i < weights.size(); ++i) {
    double w = std::min(std::max(weights[i], 1e-12), 1.0 - 1e-12);
    double y = target_onehot[i];
    acc += -(y * std::log(w) + (1.0 - y) * std::log(1.0 - w));
  }
  return acc / static_cast<double>(weights.size());
}

LstmCellParams LstmCellParams::create(ParamStore& store, const std::string& prefix,
                                      int64_t input_dim, int64_t hidden_dim, uint64_t seed) {
  double r = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto mk = [&](const char* tag, std::vector<int64_t> shape) {
    return &store.create_uniform(prefix + "." + tag, std::move(shape), r, seed);
  };
  LstmCellParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_i = mk("w_i", {hidden_dim, input_dim});
  p.u_i = mk("u_i", {hidden_dim, hidden_dim});
  p.b_i = mk("b_i", {hidden_dim});
  p.w_f = mk("w_f", {hidden_dim, input_dim});
  p.u_f = mk("u_f", {hidden_dim, hidden_dim});
  p.b_f = mk("b_f", {hidden_dim});
  p.w_o = mk("w_o", {hidden_dim, input_dim});
  p.u_o = mk("u_o", {hidden_dim, hidden_dim});
  p.b_o = mk("b_o", {hidden_dim});
  p.w_g = mk("w_g", {hidden_dim, input_dim});
  p.u_g = mk("u_g", {hidden_dim, hidden_dim});
  p.b_g = mk("b_g", {hidden_dim});
  return p;
}

LstmCellParams LstmCellParams::wrap(ParamStore& store, const std::string& prefix) {
  LstmCellParams p;
  p.w_i = &store.get(prefix + ".w_i");
  p.u_i = &store.get(prefix + ".u_i");
  p.b_i = &store.get(prefix + ".b_i");
  p.w_f = &store.get(prefix + ".w_f");
  p.u_f = &store.get(prefix + ".u_f");
  p.b_f = &store.get(prefix + ".b_f");
  p.w_o = &store.get(prefix + ".w_o");
  p.u_o = &store.get(prefix + ".u_o");
  p.b_o = &store.get(prefix + ".b_o");
  p.w_g = &store.get(prefix + ".w_g");
  p.u_g = &store.get(prefix + ".u_g");
  p.b_g = &store.get(prefix + ".b_g");
  p.input_dim = p.w_i->value.dim(1);
  p.hidden_dim = p.w_i->value.dim(0);
  return p;
}

LstmState lstm_zero_state(Graph& g, int64_t hidden_dim) {
  return LstmState{g.zeros({hidden_dim}), g.zeros({hidden_dim})};
}

namespace {

LstmState lstm_step_impl(Graph& g, const LstmCellParams& p, Var x, LstmState s, int64_t token) {
  std::array<Var, 12> params = {
      g.param(*p.w_i), g.param(*p.u_i), g.param(*p.b_i), g.param(*p.w_f),
      g.param(*p.u_f), g.param(*p.b_f), g.param(*p.w_o), g.param(*p.u_o),
      g.param(*p.b_o), g.param(*p.w_g), g.param(*p.u_g), g.param(*p.b_g),
  };
  Var hc = g.lstm_fused(params, x, s.h, s.c, token);
  int64_t d = p.hidden_dim;
  return LstmState{g.slice(hc, 0, d), g.slice(hc, d, d)};
}

}  // namespace

LstmState lstm_step(Graph& g, const LstmCellParams& p, Var x, LstmState s) {
  return lstm_step_impl(g, p, x, s, -1);
}

LstmState lstm_step_token(Graph& g, const LstmCellParams& p, int64_t token, LstmState s) {
  return lstm_step_impl(g, p, Var{}, s, token);
}

}  // namespace kbref
