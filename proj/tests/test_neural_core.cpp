#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kbref/errors.hpp"
#include "kbref/gradcheck.hpp"
#include "kbref/graph.hpp"
#include "kbref/nn.hpp"
#include "kbref/optimizer.hpp"
#include "kbref/rng.hpp"
#include "testutil.hpp"

using namespace kbref;

TEST_CASE("softmax basics") {
  Tensor s = softmax(Tensor({2}, {0.0, 0.0}));
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Stability at large magnitudes.
  Tensor big = softmax(Tensor({2}, {1000.0, 1000.0}));
  CHECK(big[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(big.all_finite());

  Tensor logs = softmax(Tensor({2}, {std::log(1.0), std::log(3.0)}));
  CHECK(logs[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(logs[1] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("softmax sums to one for extreme random inputs") {
  Rng rng(12);
  for (int trial = 0; trial < 10000; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(rng.below(12));
    Tensor v({n});
    for (int64_t i = 0; i < n; ++i) v[i] = rng.uniform(-1e3, 1e3);
    Tensor s = softmax(v);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      CHECK(s[i] >= 0.0);
      total += s[i];
    }
    CHECK(std::fabs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("cross entropy pins") {
  CHECK(cross_entropy(Tensor({3}, {1.0, 0.0, 0.0}), 0) == doctest::Approx(0.0).epsilon(1e-12));
  Tensor uniform({10});
  uniform.fill(0.1);
  CHECK(cross_entropy(uniform, 7) == doctest::Approx(std::log(10.0)).epsilon(1e-9));
  CHECK(cross_entropy(Tensor({2}, {0.5, 0.5}), 1) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(cross_entropy(Tensor({2}, {0.5, 0.5}), 2), DataError);
}

TEST_CASE("binary cross entropy pins") {
  Tensor t({2}, {1.0, 0.0});
  CHECK(binary_cross_entropy(t, t) == doctest::Approx(0.0).epsilon(1e-9));
  Tensor half({2}, {0.5, 0.5});
  CHECK(binary_cross_entropy(half, t) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  Tensor one({1}, {1.0});
  CHECK(binary_cross_entropy(one, one) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(binary_cross_entropy(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("plateau schedule halves after two flat epochs") {
  SUBCASE("monotone improvement keeps the rate") {
    OptimizerState s;
    for (double loss : {1.0, 0.9, 0.8}) s = sgd_epoch_end(s, loss);
    CHECK(s.lr == doctest::Approx(1e-4));
  }
  SUBCASE("two consecutive non-improvements halve once") {
    OptimizerState s;
    for (double loss : {1.0, 1.1, 1.2}) s = sgd_epoch_end(s, loss);
    CHECK(s.lr == doctest::Approx(0.5e-4));
    CHECK(s.plateau_count == 0);
  }
  SUBCASE("initial rate is 1e-4") {
    OptimizerState s;
    CHECK(s.lr == doctest::Approx(1e-4));
  }
  SUBCASE("counter resets on improvement") {
    OptimizerState s;
    for (double loss : {1.0, 1.1, 0.9, 1.0, 1.05}) s = sgd_epoch_end(s, loss);
    // one plateau after 1.1, reset by 0.9, then two flats -> one halving
    CHECK(s.lr == doctest::Approx(0.5e-4));
  }
}

TEST_CASE("zero-parameter lstm step is a fixed point at zero") {
  ParamStore store;
  LstmCellParams cell = LstmCellParams::create(store, "cell", 3, 4, /*seed=*/1);
  for (ParamTensor* p : store.all()) p->value.fill(0.0);
  Graph g;
  Var x = g.constant(Tensor({3}, {0.7, -1.2, 3.0}));
  LstmState s = lstm_zero_state(g, 4);
  LstmState next = lstm_step(g, cell, x, s);
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(g.value(next.h)[i] == 0.0);
    CHECK(g.value(next.c)[i] == 0.0);
  }
}

TEST_CASE("lstm step is deterministic across runs") {
  auto run = [] {
    ParamStore store;
    LstmCellParams cell = LstmCellParams::create(store, "cell", 3, 4, /*seed=*/42);
    Graph g;
    Var x = g.constant(Tensor({3}, {0.5, 0.25, -0.75}));
    LstmState next = lstm_step(g, cell, x, lstm_zero_state(g, 4));
    std::vector<double> out;
    for (int64_t i = 0; i < 4; ++i) out.push_back(g.value(next.h)[i]);
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("lstm gradients match central finite differences") {
  ParamStore store;
  LstmCellParams cell = LstmCellParams::create(store, "cell", 3, 5, /*seed=*/7);
  Rng rng(99);
  Tensor x({3});
  for (int64_t i = 0; i < 3; ++i) x[i] = rng.uniform(-1, 1);
  Tensor weights({5});
  for (int64_t i = 0; i < 5; ++i) weights[i] = rng.uniform(-1, 1);

  auto loss_fn = [&](bool with_grad) {
    Graph g;
    LstmState s0 = lstm_zero_state(g, 5);
    LstmState s1 = lstm_step(g, cell, g.constant(x), s0);
    LstmState s2 = lstm_step(g, cell, g.constant(x), s1);  // two steps: recurrent path
    Var loss = g.dot(s2.h, g.constant(weights));
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };
  auto params = store.all();
  GradCheckReport rep = finite_diff_check(loss_fn, params, 1e-5);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("quadratic loss gradcheck is tight") {
  ParamStore store;
  ParamTensor& p = store.create_uniform("p", {6}, 2.0, /*seed=*/3);
  auto loss_fn = [&](bool with_grad) {
    Graph g;
    Var v = g.param(p);
    Var loss = g.dot(v, v);
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };
  auto params = store.all();
  GradCheckReport rep = finite_diff_check(loss_fn, params, 1e-5);
  CHECK(rep.max_rel_error < 1e-7);
  CHECK(rep.coords_checked == 6);
}

TEST_CASE("zero-parameter model gradchecks vacuously") {
  ParamStore store;
  auto loss_fn = [&](bool) { return 1.0; };
  auto params = store.all();
  GradCheckReport rep = finite_diff_check(loss_fn, params, 1e-5);
  CHECK(rep.max_rel_error == 0.0);
  CHECK(rep.coords_checked == 0);
}

TEST_CASE("graph ops raise on shape mismatches and non-finite values") {
  Graph g;
  Var a = g.constant(Tensor({2}, {1, 2}));
  Var b = g.constant(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matvec(a, b), ShapeError);
  CHECK_THROWS_AS(g.constant(Tensor({1}, {std::nan("")})), NumericError);
  Var w = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(g.column(w, 2), ShapeError);
}

TEST_CASE("graph softmax masks padded entries to exact zero") {
  Graph g;
  Var logits = g.constant(Tensor({4}, {1.0, 2.0, 100.0, 200.0}));
  Var s = g.softmax(logits, 2);
  const Tensor& v = g.value(s);
  CHECK(v[2] == 0.0);
  CHECK(v[3] == 0.0);
  CHECK(v[0] + v[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked softmax gradient ignores padded logits") {
  ParamStore store;
  ParamTensor& p = store.create_uniform("logits", {4}, 1.0, /*seed=*/5);
  auto loss_fn = [&](bool with_grad) {
    Graph g;
    Var s = g.softmax(g.param(p), 3);
    Var loss = g.pick(s, 0);
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };
  auto params = store.all();
  GradCheckReport rep = finite_diff_check(loss_fn, params, 1e-5);
  CHECK(rep.max_rel_error < 1e-7);
  // Padded coordinate gets exactly zero gradient both ways.
  CHECK(p.grad[3] == 0.0);
}

TEST_CASE("sgd updater applies momentum and weight decay") {
  ParamStore store;
  ParamTensor& p = store.create("p", {1});
  p.value[0] = 1.0;
  p.grad[0] = 2.0;
  SgdUpdater plain(SgdConfig{});
  auto params = store.all();
  plain.step(params, 0.5);
  CHECK(p.value[0] == doctest::Approx(0.0).epsilon(1e-12));

  p.value[0] = 1.0;
  p.grad[0] = 0.0;
  SgdUpdater decay(SgdConfig{0.0, 0.1});
  decay.step(params, 1.0);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-12));
}
