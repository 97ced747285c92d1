#pragma once

#include <cstdint>
#include <string>

#include "kbref/graph.hpp"
#include "kbref/params.hpp"
#include "kbref/tensor.hpp"

namespace kbref {

// Standalone numerically-stable kernels (the Graph ops use the same math).
Tensor softmax(const Tensor& v);
Tensor softmax_masked(const Tensor& v, int64_t valid_count);
// -ln(probs[target]), input clamped at 1e-12.
double cross_entropy(const Tensor& probs, int64_t target);
// Mean elementwise binary cross entropy; weights clamped to (0, 1).
double binary_cross_entropy(const Tensor& weights, const Tensor& target_onehot);

// Gate parameters of one recurrent (LSTM-style) cell. Weights and biases are
// initialized from seeded uniform(-r, r) with r = 1/sqrt(hidden).
struct LstmCellParams {
  ParamTensor* w_i = nullptr;  // input gate: w [h, in], u [h, h], b [h]
  ParamTensor* u_i = nullptr;
  ParamTensor* b_i = nullptr;
  ParamTensor* w_f = nullptr;  // forget gate
  ParamTensor* u_f = nullptr;
  ParamTensor* b_f = nullptr;
  ParamTensor* w_o = nullptr;  // output gate
  ParamTensor* u_o = nullptr;
  ParamTensor* b_o = nullptr;
  ParamTensor* w_g = nullptr;  // candidate
  ParamTensor* u_g = nullptr;
  ParamTensor* b_g = nullptr;
  int64_t input_dim = 0;
  int64_t hidden_dim = 0;

  static LstmCellParams create(ParamStore& store, const std::string& prefix, int64_t input_dim,
                               int64_t hidden_dim, uint64_t seed);
  // Wraps tensors already present in the store (e.g. after checkpoint load).
  static LstmCellParams wrap(ParamStore& store, const std::string& prefix);
};

struct LstmState {
  Var h;
  Var c;
};

LstmState lstm_zero_state(Graph& g, int64_t hidden_dim);

// Standard gated update:
//   i = sig(Wi x + Ui h + bi)   f = sig(Wf x + Uf h + bf)
//   o = sig(Wo x + Uo h + bo)   cand = tanh(Wg x + Ug h + bg)
//   c' = f*c + i*cand           h' = o * tanh(c')
LstmState lstm_step(Graph& g, const LstmCellParams& p, Var x, LstmState s);
// Same update with a one-hot input selected by token index, so the input
// matmuls reduce to column lookups.
LstmState lstm_step_token(Graph& g, const LstmCellParams& p, int64_t token, LstmState s);

}  // namespace kbref
