#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "kbref/params.hpp"
#include "kbref/tensor.hpp"

namespace kbref {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Build one graph per forward pass, call backward(loss)
// at most once; gradients for param nodes accumulate into ParamTensor::grad
// (so several graphs can contribute to one batch), everything else is local
// to the graph. Node evaluation is eager and strictly ordered, which keeps
// seeded runs bit-reproducible.
//
// reset() rewinds the tape while keeping node and tensor storage, so hot
// loops (finite differences, training) can rebuild the same graph shape
// without touching the allocator.
//
// Every op checks its output for NaN/Inf and raises NumericError, naming the
// op, as the training-time NaN guard.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void reset();

  Var constant(Tensor value);
  Var zeros(std::vector<int64_t> shape);
  Var param(ParamTensor& p);

  // Elementwise; shapes must match.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var abs(Var a);
  Var scale(Var a, double c);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);

  // w: [m, n], x: [n] -> [m]
  Var matvec(Var w, Var x);
  // w[:, j], i.e. w applied to the j-th basis vector.
  Var column(Var w, int64_t j);
  Var concat(std::span<const Var> parts);
  Var reshape(Var a, std::vector<int64_t> shape);
  // Masked stable softmax over a vector: entries at index >= valid_count get
  // exactly zero output mass (valid_count = -1 means all entries).
  Var softmax(Var logits, int64_t valid_count = -1);
  Var dot(Var a, Var b);           // -> [1]
  Var mul_scalar(Var x, Var s);    // s: [1], broadcast multiply
  // m: [n, d], w: [n] -> sum_i w[i] * m[i, :]
  Var weighted_rows(Var m, Var w);
  Var pick(Var v, int64_t i);      // -> [1]
  Var sum(Var v);                  // -> [1]
  // -ln(max(probs[target], 1e-12)) -> [1]
  Var nll(Var probs, int64_t target);
  // Mean elementwise binary cross entropy against a fixed target vector;
  // weights are clamped to [1e-12, 1 - 1e-12].
  Var bce_mean(Var weights, Tensor target);
  // Contiguous range copy: v[start, start+len).
  Var slice(Var v, int64_t start, int64_t len);
  // Fused gated recurrence step with a hand-derived backward; one node for
  // the whole cell update instead of ~30. Output is [h'; c'] (length 2*D),
  // split with slice(). `params` is the 12-tensor gate list
  // {w,u,b} x {input, forget, output, candidate}; `token` >= 0 replaces the
  // dense input x with a one-hot column lookup.
  Var lstm_fused(std::span<const Var> params, Var x, Var h_prev, Var c_prev, int64_t token = -1);

  const Tensor& value(Var v) const;
  // Gradient of the loss w.r.t. v; valid after backward(). For param nodes
  // this aliases the ParamTensor's grad.
  const Tensor& grad(Var v) const;
  void backward(Var loss);
  size_t size() const { return active_; }

 private:
  enum class Op : uint8_t {
    Constant, Param, Add, Sub, Mul, Abs, Scale, Tanh, Sigmoid, Relu,
    MatVec, Column, Concat, Reshape, Softmax, Dot, MulScalar, WeightedRows,
    Pick, Sum, Nll, BceMean, Slice, LstmFused,
  };

  struct Node {
    Op op;
    Tensor value;               // unused for Param (aliases the ParamTensor)
    Tensor grad;
    bool grad_live = false;     // grad buffer is valid for the current tape
    std::vector<int32_t> inputs;
    int64_t aux = 0;            // column j / pick i / nll target / softmax valid
    int64_t aux2 = 0;           // slice length / lstm token index
    double factor = 0.0;        // Scale
    Tensor aux_tensor;          // BceMean target / LstmFused activation cache
    ParamTensor* param = nullptr;
  };

  // Grabs the next tape slot, reusing storage from a previous build.
  Node& begin(Op op);
  Var finish(Node& n, const char* opname);
  const Tensor& val(int32_t id) const;
  Tensor& grad_buf(int32_t id);
  void backprop(int32_t id);

  std::vector<Node> nodes_;
  size_t active_ = 0;
  std::unordered_map<const ParamTensor*, int32_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace kbref
