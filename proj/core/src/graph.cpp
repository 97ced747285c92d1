#include "kbref/graph.hpp"

#include <cmath>
#include <string>

#include "kbref/errors.hpp"

namespace kbref {

namespace {

constexpr double kProbClamp = 1e-12;

void require(bool cond, const char* opname, const std::string& what) {
  if (!cond) throw ShapeError(std::string(opname) + ": " + what);
}

inline double sigmoid_stable(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

void Graph::reset() {
  for (size_t i = 0; i < active_; ++i) nodes_[i].grad_live = false;
  active_ = 0;
  param_nodes_.clear();
  backward_done_ = false;
}

Graph::Node& Graph::begin(Op op) {
  if (active_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[active_];
  n.op = op;
  n.inputs.clear();
  n.aux = 0;
  n.aux2 = 0;
  n.factor = 0.0;
  n.param = nullptr;
  n.grad_live = false;
  return n;
}

Var Graph::finish(Node& n, const char* opname) {
  if (n.op != Op::Param && !n.value.all_finite()) {
    throw NumericError(std::string(opname) + ": non-finite output value");
  }
  return Var{static_cast<int32_t>(active_++)};
}

const Tensor& Graph::val(int32_t id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.op == Op::Param ? n.param->value : n.value;
}

Tensor& Graph::grad_buf(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.op == Op::Param) return n.param->grad;
  if (!n.grad_live) {
    n.grad.reinit(val(id).shape());
    n.grad.fill(0.0);
    n.grad_live = true;
  }
  return n.grad;
}

const Tensor& Graph::value(Var v) const {
  if (!v.valid() || v.id >= static_cast<int32_t>(active_)) {
    throw Error("value() on invalid Var");
  }
  return val(v.id);
}

const Tensor& Graph::grad(Var v) const {
  if (!v.valid() || v.id >= static_cast<int32_t>(active_)) {
    throw Error("grad() on invalid Var");
  }
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  return n.op == Op::Param ? n.param->grad : n.grad;
}

Var Graph::constant(Tensor value) {
  Node& n = begin(Op::Constant);
  n.value = std::move(value);
  return finish(n, "constant");
}

Var Graph::zeros(std::vector<int64_t> shape) {
  Node& n = begin(Op::Constant);
  n.value.reinit(shape);
  n.value.fill(0.0);
  return finish(n, "zeros");
}

Var Graph::param(ParamTensor& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  if (!p.value.all_finite()) {
    throw NumericError("param '" + p.name + "' holds non-finite values");
  }
  Node& n = begin(Op::Param);
  n.param = &p;
  Var v = finish(n, "param");
  param_nodes_[&p] = v.id;
  return v;
}

Var Graph::add(Var a, Var b) {
  Node& n = begin(Op::Add);
  const Tensor &ta = value(a), &tb = value(b);
  require(ta.same_shape(tb), "add", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  n.inputs = {a.id, b.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + tb[i];
  return finish(n, "add");
}

Var Graph::sub(Var a, Var b) {
  Node& n = begin(Op::Sub);
  const Tensor &ta = value(a), &tb = value(b);
  require(ta.same_shape(tb), "sub", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  n.inputs = {a.id, b.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] - tb[i];
  return finish(n, "sub");
}

Var Graph::mul(Var a, Var b) {
  Node& n = begin(Op::Mul);
  const Tensor &ta = value(a), &tb = value(b);
  require(ta.same_shape(tb), "mul", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  n.inputs = {a.id, b.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] * tb[i];
  return finish(n, "mul");
}

Var Graph::abs(Var a) {
  Node& n = begin(Op::Abs);
  const Tensor& ta = value(a);
  n.inputs = {a.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = std::fabs(ta[i]);
  return finish(n, "abs");
}

Var Graph::scale(Var a, double c) {
  Node& n = begin(Op::Scale);
  const Tensor& ta = value(a);
  n.inputs = {a.id};
  n.factor = c;
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = c * ta[i];
  return finish(n, "scale");
}

Var Graph::tanh(Var a) {
  Node& n = begin(Op::Tanh);
  const Tensor& ta = value(a);
  n.inputs = {a.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = std::tanh(ta[i]);
  return finish(n, "tanh");
}

Var Graph::sigmoid(Var a) {
  Node& n = begin(Op::Sigmoid);
  const Tensor& ta = value(a);
  n.inputs = {a.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = sigmoid_stable(ta[i]);
  return finish(n, "sigmoid");
}

Var Graph::relu(Var a) {
  Node& n = begin(Op::Relu);
  const Tensor& ta = value(a);
  n.inputs = {a.id};
  n.value.reinit(ta.shape());
  for (int64_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] > 0 ? ta[i] : 0.0;
  return finish(n, "relu");
}

Var Graph::matvec(Var w, Var x) {
  Node& n = begin(Op::MatVec);
  const Tensor &tw = value(w), &tx = value(x);
  require(tw.rank() == 2, "matvec", "matrix must be rank 2, got " + tw.shape_str());
  require(tx.rank() == 1 && tx.dim(0) == tw.dim(1), "matvec",
          "vector shape " + tx.shape_str() + " does not match matrix " + tw.shape_str());
  int64_t m = tw.dim(0), k = tw.dim(1);
  n.inputs = {w.id, x.id};
  n.value.reinit({m});
  const double* wd = tw.data();
  for (int64_t r = 0; r < m; ++r) {
    double acc = 0.0;
    const double* row = wd + r * k;
    for (int64_t c = 0; c < k; ++c) acc += row[c] * tx[c];
    n.value[r] = acc;
  }
  return finish(n, "matvec");
}

Var Graph::column(Var w, int64_t j) {
  Node& n = begin(Op::Column);
  const Tensor& tw = value(w);
  require(tw.rank() == 2, "column", "matrix must be rank 2, got " + tw.shape_str());
  require(j >= 0 && j < tw.dim(1), "column", "column index out of range");
  n.inputs = {w.id};
  n.aux = j;
  n.value.reinit({tw.dim(0)});
  for (int64_t r = 0; r < tw.dim(0); ++r) n.value[r] = tw.at2(r, j);
  return finish(n, "column");
}

Var Graph::concat(std::span<const Var> parts) {
  Node& n = begin(Op::Concat);
  require(!parts.empty(), "concat", "no inputs");
  int64_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    require(t.rank() == 1, "concat", "inputs must be rank 1, got " + t.shape_str());
    total += t.dim(0);
  }
  n.value.reinit({total});
  int64_t off = 0;
  for (Var p : parts) {
    n.inputs.push_back(p.id);
    const Tensor& t = val(p.id);
    for (int64_t i = 0; i < t.size(); ++i) n.value[off + i] = t[i];
    off += t.size();
  }
  return finish(n, "concat");
}

Var Graph::reshape(Var a, std::vector<int64_t> shape) {
  Node& n = begin(Op::Reshape);
  const Tensor& ta = value(a);
  require(shape_product(shape) == ta.size(), "reshape",
          "cannot reshape " + ta.shape_str() + " (size mismatch)");
  n.inputs = {a.id};
  n.value.assign_copy(shape, ta.data());
  return finish(n, "reshape");
}

Var Graph::softmax(Var logits, int64_t valid_count) {
  Node& n = begin(Op::Softmax);
  const Tensor& tl = value(logits);
  require(tl.rank() == 1 && tl.dim(0) >= 1, "softmax", "need a non-empty vector");
  int64_t k = tl.dim(0);
  int64_t valid = valid_count < 0 ? k : valid_count;
  require(valid >= 1 && valid <= k, "softmax", "valid_count out of range");
  n.inputs = {logits.id};
  n.aux = valid;
  n.value.reinit({k});
  n.value.fill(0.0);
  double mx = tl[0];
  for (int64_t i = 1; i < valid; ++i) mx = std::max(mx, tl[i]);
  double z = 0.0;
  for (int64_t i = 0; i < valid; ++i) {
    n.value[i] = std::exp(tl[i] - mx);
    z += n.value[i];
  }
  for (int64_t i = 0; i < valid; ++i) n.value[i] /= z;
  return finish(n, "softmax");
}

Var Graph::dot(Var a, Var b) {
  Node& n = begin(Op::Dot);
  const Tensor &ta = value(a), &tb = value(b);
  require(ta.rank() == 1 && ta.same_shape(tb), "dot",
          "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  double acc = 0.0;
  for (int64_t i = 0; i < ta.size(); ++i) acc += ta[i] * tb[i];
  n.inputs = {a.id, b.id};
  n.value.reinit({1});
  n.value[0] = acc;
  return finish(n, "dot");
}

Var Graph::mul_scalar(Var x, Var s) {
  Node& n = begin(Op::MulScalar);
  const Tensor &tx = value(x), &ts = value(s);
  require(ts.size() == 1, "mul_scalar", "scalar operand must have size 1");
  n.inputs = {x.id, s.id};
  n.value.reinit(tx.shape());
  for (int64_t i = 0; i < tx.size(); ++i) n.value[i] = tx[i] * ts[0];
  return finish(n, "mul_scalar");
}

Var Graph::weighted_rows(Var m, Var w) {
  Node& n = begin(Op::WeightedRows);
  const Tensor &tm = value(m), &tw = value(w);
  require(tm.rank() == 2, "weighted_rows", "matrix must be rank 2, got " + tm.shape_str());
  require(tw.rank() == 1 && tw.dim(0) == tm.dim(0), "weighted_rows",
          "weights " + tw.shape_str() + " do not match rows of " + tm.shape_str());
  int64_t rows = tm.dim(0), d = tm.dim(1);
  n.inputs = {m.id, w.id};
  n.value.reinit({d});
  n.value.fill(0.0);
  for (int64_t r = 0; r < rows; ++r) {
    double wr = tw[r];
    if (wr == 0.0) continue;
    for (int64_t c = 0; c < d; ++c) n.value[c] += wr * tm.at2(r, c);
  }
  return finish(n, "weighted_rows");
}

Var Graph::pick(Var v, int64_t i) {
  Node& n = begin(Op::Pick);
  const Tensor& tv = value(v);
  require(tv.rank() == 1, "pick", "input must be rank 1");
  require(i >= 0 && i < tv.dim(0), "pick", "index out of range");
  n.inputs = {v.id};
  n.aux = i;
  n.value.reinit({1});
  n.value[0] = tv[i];
  return finish(n, "pick");
}

Var Graph::sum(Var v) {
  Node& n = begin(Op::Sum);
  const Tensor& tv = value(v);
  double acc = 0.0;
  for (int64_t i = 0; i < tv.size(); ++i) acc += tv[i];
  n.inputs = {v.id};
  n.value.reinit({1});
  n.value[0] = acc;
  return finish(n, "sum");
}

Var Graph::nll(Var probs, int64_t target) {
  Node& n = begin(Op::Nll);
  const Tensor& tp = value(probs);
  require(tp.rank() == 1, "nll", "probabilities must be rank 1");
  if (target < 0 || target >= tp.dim(0)) {
    throw DataError("nll: target index " + std::to_string(target) + " out of range for " +
                    tp.shape_str());
  }
  n.inputs = {probs.id};
  n.aux = target;
  n.value.reinit({1});
  n.value[0] = -std::log(std::max(tp[target], kProbClamp));
  return finish(n, "nll");
}

Var Graph::bce_mean(Var weights, Tensor target) {
  Node& n = begin(Op::BceMean);
  const Tensor& tw = value(weights);
  require(tw.rank() == 1 && tw.same_shape(target), "bce_mean",
          "weights " + tw.shape_str() + " vs target " + target.shape_str());
  int64_t k = tw.dim(0);
  double acc = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double w = std::min(std::max(tw[i], kProbClamp), 1.0 - kProbClamp);
    double y = target[i];
    acc += -(y * std::log(w) + (1.0 - y) * std::log(1.0 - w));
  }
  n.inputs = {weights.id};
  n.aux_tensor = std::move(target);
  n.value.reinit({1});
  n.value[0] = acc / static_cast<double>(k);
  return finish(n, "bce_mean");
}

Var Graph::slice(Var v, int64_t start, int64_t len) {
  Node& n = begin(Op::Slice);
  const Tensor& tv = value(v);
  require(tv.rank() == 1, "slice", "input must be rank 1");
  require(start >= 0 && len >= 1 && start + len <= tv.dim(0), "slice", "range out of bounds");
  n.inputs = {v.id};
  n.aux = start;
  n.aux2 = len;
  n.value.assign_copy({len}, tv.data() + start);
  return finish(n, "slice");
}

Var Graph::lstm_fused(std::span<const Var> params, Var x, Var h_prev, Var c_prev, int64_t token) {
  Node& n = begin(Op::LstmFused);
  require(params.size() == 12, "lstm_fused", "expected 12 gate tensors");
  const Tensor& h = value(h_prev);
  const Tensor& c = value(c_prev);
  require(h.rank() == 1 && c.same_shape(h), "lstm_fused", "bad state shapes");
  const int64_t d = h.dim(0);
  const Tensor* xv = nullptr;
  if (token < 0) {
    xv = &value(x);
    require(xv->rank() == 1, "lstm_fused", "input must be rank 1");
  }
  // Gate tensor layout: {w, u, b} per gate, gates ordered i, f, o, g.
  for (int gate = 0; gate < 4; ++gate) {
    const Tensor& w = value(params[static_cast<size_t>(3 * gate)]);
    const Tensor& u = value(params[static_cast<size_t>(3 * gate + 1)]);
    const Tensor& b = value(params[static_cast<size_t>(3 * gate + 2)]);
    require(w.rank() == 2 && w.dim(0) == d, "lstm_fused", "bad gate weight shape");
    require(u.rank() == 2 && u.dim(0) == d && u.dim(1) == d, "lstm_fused",
            "bad recurrent weight shape");
    require(b.rank() == 1 && b.dim(0) == d, "lstm_fused", "bad bias shape");
    if (token >= 0) {
      require(token < w.dim(1), "lstm_fused", "token index out of range");
    } else {
      require(w.dim(1) == xv->dim(0), "lstm_fused", "input width mismatch");
    }
  }

  n.inputs.reserve(15);
  n.inputs.push_back(token < 0 ? x.id : -1);  // no dense input when token-driven
  n.inputs.push_back(h_prev.id);
  n.inputs.push_back(c_prev.id);
  for (Var p : params) n.inputs.push_back(p.id);
  n.aux2 = token;
  n.value.reinit({2 * d});
  n.aux_tensor.reinit({5 * d});  // cached activations: i, f, o, g, tanh(c')

  double* act = n.aux_tensor.data();
  for (int gate = 0; gate < 4; ++gate) {
    const Tensor& w = val(n.inputs[static_cast<size_t>(3 + 3 * gate)]);
    const Tensor& u = val(n.inputs[static_cast<size_t>(3 + 3 * gate + 1)]);
    const Tensor& b = val(n.inputs[static_cast<size_t>(3 + 3 * gate + 2)]);
    double* out = act + gate * d;
    for (int64_t r = 0; r < d; ++r) {
      double pre = b[r];
      if (token >= 0) {
        pre += w.at2(r, token);
      } else {
        const double* row = w.data() + r * w.dim(1);
        for (int64_t k = 0; k < xv->dim(0); ++k) pre += row[k] * (*xv)[k];
      }
      const double* urow = u.data() + r * d;
      for (int64_t k = 0; k < d; ++k) pre += urow[k] * h[k];
      out[r] = gate == 3 ? std::tanh(pre) : sigmoid_stable(pre);
    }
  }
  for (int64_t r = 0; r < d; ++r) {
    double c_next = act[d + r] * c[r] + act[r] * act[3 * d + r];  // f*c + i*g
    double tc = std::tanh(c_next);
    act[4 * d + r] = tc;
    n.value[d + r] = c_next;
    n.value[r] = act[2 * d + r] * tc;  // o * tanh(c')
  }
  return finish(n, "lstm_fused");
}

void Graph::backward(Var loss) {
  if (backward_done_) throw Error("backward() already called on this graph");
  backward_done_ = true;
  if (!loss.valid() || loss.id >= static_cast<int32_t>(active_)) {
    throw Error("backward() on invalid Var");
  }
  if (value(loss).size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got " + value(loss).shape_str());
  }
  grad_buf(loss.id)[0] = 1.0;
  for (int32_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.op == Op::Constant || n.op == Op::Param) continue;
    if (!n.grad_live) continue;  // not reached from the loss
    backprop(i);
  }
}

void Graph::backprop(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Tensor& g = n.grad;

  // Accumulation into constants is skipped: nothing reads their gradient.
  auto target = [&](int32_t input) -> Tensor* {
    Node& in = nodes_[static_cast<size_t>(input)];
    if (in.op == Op::Constant) return nullptr;
    return &grad_buf(input);
  };

  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      break;
    case Op::Add: {
      for (int k = 0; k < 2; ++k) {
        if (Tensor* t = target(n.inputs[static_cast<size_t>(k)])) {
          for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
        }
      }
      break;
    }
    case Op::Sub: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
      }
      if (Tensor* t = target(n.inputs[1])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor &a = val(n.inputs[0]), &b = val(n.inputs[1]);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * b[i];
      }
      if (Tensor* t = target(n.inputs[1])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * a[i];
      }
      break;
    }
    case Op::Abs: {
      const Tensor& a = val(n.inputs[0]);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) {
          double s = a[i] > 0 ? 1.0 : (a[i] < 0 ? -1.0 : 0.0);
          (*t)[i] += g[i] * s;
        }
      }
      break;
    }
    case Op::Scale: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * n.factor;
      }
      break;
    }
    case Op::Tanh: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      }
      break;
    }
    case Op::Sigmoid: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      }
      break;
    }
    case Op::Relu: {
      const Tensor& a = val(n.inputs[0]);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0) (*t)[i] += g[i];
        }
      }
      break;
    }
    case Op::MatVec: {
      const Tensor &w = val(n.inputs[0]), &x = val(n.inputs[1]);
      int64_t m = w.dim(0), k = w.dim(1);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t r = 0; r < m; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* row = t->data() + r * k;
          for (int64_t c = 0; c < k; ++c) row[c] += gr * x[c];
        }
      }
      if (Tensor* t = target(n.inputs[1])) {
        for (int64_t r = 0; r < m; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = w.data() + r * k;
          for (int64_t c = 0; c < k; ++c) (*t)[c] += gr * row[c];
        }
      }
      break;
    }
    case Op::Column: {
      if (Tensor* t = target(n.inputs[0])) {
        int64_t cols = val(n.inputs[0]).dim(1);
        for (int64_t r = 0; r < g.size(); ++r) t->data()[r * cols + n.aux] += g[r];
      }
      break;
    }
    case Op::Concat: {
      int64_t off = 0;
      for (int32_t input : n.inputs) {
        int64_t len = val(input).size();
        if (Tensor* t = target(input)) {
          for (int64_t i = 0; i < len; ++i) (*t)[i] += g[off + i];
        }
        off += len;
      }
      break;
    }
    case Op::Reshape: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
      }
      break;
    }
    case Op::Softmax: {
      if (Tensor* t = target(n.inputs[0])) {
        int64_t valid = n.aux;
        double s = 0.0;
        for (int64_t i = 0; i < valid; ++i) s += g[i] * n.value[i];
        for (int64_t i = 0; i < valid; ++i) (*t)[i] += n.value[i] * (g[i] - s);
      }
      break;
    }
    case Op::Dot: {
      const Tensor &a = val(n.inputs[0]), &b = val(n.inputs[1]);
      double g0 = g[0];
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < a.size(); ++i) (*t)[i] += g0 * b[i];
      }
      if (Tensor* t = target(n.inputs[1])) {
        for (int64_t i = 0; i < b.size(); ++i) (*t)[i] += g0 * a[i];
      }
      break;
    }
    case Op::MulScalar: {
      const Tensor &x = val(n.inputs[0]), &s = val(n.inputs[1]);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < g.size(); ++i) (*t)[i] += g[i] * s[0];
      }
      if (Tensor* t = target(n.inputs[1])) {
        double acc = 0.0;
        for (int64_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
        (*t)[0] += acc;
      }
      break;
    }
    case Op::WeightedRows: {
      const Tensor &m = val(n.inputs[0]), &w = val(n.inputs[1]);
      int64_t rows = m.dim(0), d = m.dim(1);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t r = 0; r < rows; ++r) {
          double wr = w[r];
          if (wr == 0.0) continue;
          double* row = t->data() + r * d;
          for (int64_t c = 0; c < d; ++c) row[c] += wr * g[c];
        }
      }
      if (Tensor* t = target(n.inputs[1])) {
        for (int64_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          const double* row = m.data() + r * d;
          for (int64_t c = 0; c < d; ++c) acc += row[c] * g[c];
          (*t)[r] += acc;
        }
      }
      break;
    }
    case Op::Pick: {
      if (Tensor* t = target(n.inputs[0])) (*t)[n.aux] += g[0];
      break;
    }
    case Op::Sum: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < t->size(); ++i) (*t)[i] += g[0];
      }
      break;
    }
    case Op::Nll: {
      const Tensor& p = val(n.inputs[0]);
      if (Tensor* t = target(n.inputs[0])) {
        if (p[n.aux] > kProbClamp) (*t)[n.aux] += -g[0] / p[n.aux];
      }
      break;
    }
    case Op::BceMean: {
      const Tensor& w = val(n.inputs[0]);
      const Tensor& y = n.aux_tensor;
      int64_t k = w.dim(0);
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < k; ++i) {
          if (w[i] > kProbClamp && w[i] < 1.0 - kProbClamp) {
            (*t)[i] += g[0] / static_cast<double>(k) * (w[i] - y[i]) / (w[i] * (1.0 - w[i]));
          }
        }
      }
      break;
    }
    case Op::Slice: {
      if (Tensor* t = target(n.inputs[0])) {
        for (int64_t i = 0; i < n.aux2; ++i) (*t)[n.aux + i] += g[i];
      }
      break;
    }
    case Op::LstmFused: {
      const int64_t d = n.value.dim(0) / 2;
      const int64_t token = n.aux2;
      const Tensor& h_prev = val(n.inputs[1]);
      const Tensor& c_prev = val(n.inputs[2]);
      const double* act = n.aux_tensor.data();
      const double *gi = act, *gf = act + d, *go = act + 2 * d, *gg = act + 3 * d,
                   *tc = act + 4 * d;

      // Pre-activation gradients for the four gates.
      std::vector<double> da(static_cast<size_t>(4 * d));
      std::vector<double> dc(static_cast<size_t>(d));
      for (int64_t r = 0; r < d; ++r) {
        double gh = g[r];
        double dcr = gh * go[r] * (1.0 - tc[r] * tc[r]) + g[d + r];
        dc[static_cast<size_t>(r)] = dcr;
        double dor = gh * tc[r];
        da[static_cast<size_t>(r)] = dcr * gg[r] * gi[r] * (1.0 - gi[r]);
        da[static_cast<size_t>(d + r)] = dcr * c_prev[r] * gf[r] * (1.0 - gf[r]);
        da[static_cast<size_t>(2 * d + r)] = dor * go[r] * (1.0 - go[r]);
        da[static_cast<size_t>(3 * d + r)] = dcr * gi[r] * (1.0 - gg[r] * gg[r]);
      }
      if (Tensor* t = target(n.inputs[2])) {  // c_prev
        for (int64_t r = 0; r < d; ++r) (*t)[r] += dc[static_cast<size_t>(r)] * gf[r];
      }
      const Tensor* xv = token < 0 ? &val(n.inputs[0]) : nullptr;
      Tensor* dx = token < 0 ? target(n.inputs[0]) : nullptr;
      Tensor* dh = target(n.inputs[1]);
      for (int gate = 0; gate < 4; ++gate) {
        const double* dag = da.data() + gate * d;
        int32_t w_id = n.inputs[static_cast<size_t>(3 + 3 * gate)];
        int32_t u_id = n.inputs[static_cast<size_t>(3 + 3 * gate + 1)];
        int32_t b_id = n.inputs[static_cast<size_t>(3 + 3 * gate + 2)];
        const Tensor& w = val(w_id);
        const Tensor& u = val(u_id);
        if (Tensor* t = target(b_id)) {
          for (int64_t r = 0; r < d; ++r) (*t)[r] += dag[r];
        }
        if (Tensor* t = target(w_id)) {
          int64_t cols = w.dim(1);
          if (token >= 0) {
            for (int64_t r = 0; r < d; ++r) t->data()[r * cols + token] += dag[r];
          } else {
            for (int64_t r = 0; r < d; ++r) {
              double dr = dag[r];
              if (dr == 0.0) continue;
              double* row = t->data() + r * cols;
              for (int64_t k = 0; k < cols; ++k) row[k] += dr * (*xv)[k];
            }
          }
        }
        if (Tensor* t = target(u_id)) {
          for (int64_t r = 0; r < d; ++r) {
            double dr = dag[r];
            if (dr == 0.0) continue;
            double* row = t->data() + r * d;
            for (int64_t k = 0; k < d; ++k) row[k] += dr * h_prev[k];
          }
        }
        if (dh) {
          for (int64_t r = 0; r < d; ++r) {
            double dr = dag[r];
            if (dr == 0.0) continue;
            const double* row = u.data() + r * d;
            for (int64_t k = 0; k < d; ++k) (*dh)[k] += dr * row[k];
          }
        }
        if (dx) {
          int64_t cols = w.dim(1);
          for (int64_t r = 0; r < d; ++r) {
            double dr = dag[r];
            if (dr == 0.0) continue;
            const double* row = w.data() + r * cols;
            for (int64_t k = 0; k < cols; ++k) (*dx)[k] += dr * row[k];
          }
        }
      }
      break;
    }
  }
}

}  // namespace kbref
