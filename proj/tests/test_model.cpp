#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kbref/errors.hpp"
#include "kbref/gradcheck.hpp"
#include "kbref/model.hpp"
#include "kbref/optimizer.hpp"
#include "testutil.hpp"

using namespace kbref;
using testutil::GroundingFixture;
using testutil::Signal;

namespace {

ModelConfig small_config() {
  ModelConfig c = testutil::fixture_model_config();
  return c;
}

Vocabulary small_vocab() {
  Vocabulary v;
  for (const auto& w : testutil::word_pool()) v.add(w);
  return v;
}

Tensor rand_vec(int64_t n, Rng& rng) { return testutil::random_tensor({n}, rng); }

// Plain-double LSTM cell transcription used by the oracles below.
struct CellRef {
  const Tensor &wi, &ui, &bi, &wf, &uf, &bf, &wo, &uo, &bo, &wg, &ug, &bg;

  explicit CellRef(const ParamStore& s, const std::string& p)
      : wi(s.get(p + ".w_i").value), ui(s.get(p + ".u_i").value), bi(s.get(p + ".b_i").value),
        wf(s.get(p + ".w_f").value), uf(s.get(p + ".u_f").value), bf(s.get(p + ".b_f").value),
        wo(s.get(p + ".w_o").value), uo(s.get(p + ".u_o").value), bo(s.get(p + ".b_o").value),
        wg(s.get(p + ".w_g").value), ug(s.get(p + ".u_g").value), bg(s.get(p + ".b_g").value) {}

  static std::vector<double> affine(const Tensor& w, const std::vector<double>& x,
                                    const Tensor& u, const std::vector<double>& h,
                                    const Tensor& b) {
    std::vector<double> out(static_cast<size_t>(w.dim(0)));
    for (int64_t r = 0; r < w.dim(0); ++r) {
      double acc = b[r];
      for (int64_t c = 0; c < w.dim(1); ++c) acc += w.at2(r, c) * x[static_cast<size_t>(c)];
      for (int64_t c = 0; c < u.dim(1); ++c) acc += u.at2(r, c) * h[static_cast<size_t>(c)];
      out[static_cast<size_t>(r)] = acc;
    }
    return out;
  }

  void step(const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c) const {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    auto i = affine(wi, x, ui, h, bi);
    auto f = affine(wf, x, uf, h, bf);
    auto o = affine(wo, x, uo, h, bo);
    auto g = affine(wg, x, ug, h, bg);
    std::vector<double> c_next(h.size()), h_next(h.size());
    for (size_t k = 0; k < h.size(); ++k) {
      c_next[k] = sig(f[k]) * c[k] + sig(i[k]) * std::tanh(g[k]);
      h_next[k] = sig(o[k]) * std::tanh(c_next[k]);
    }
    h = std::move(h_next);
    c = std::move(c_next);
  }
};

}  // namespace

TEST_CASE("geometric_feature pins") {
  Tensor full = geometric_feature(Box{0, 0, 100, 200}, 100, 200);
  CHECK(full[0] == 0.0);
  CHECK(full[1] == 0.0);
  CHECK(full[2] == 1.0);
  CHECK(full[3] == 1.0);
  CHECK(full[4] == 1.0);

  Tensor g = geometric_feature(Box{10, 20, 60, 120}, 100, 200);
  CHECK(g[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g[4] == doctest::Approx(0.25).epsilon(1e-12));

  // Quarter-area centered box.
  Tensor q = geometric_feature(Box{25, 50, 75, 150}, 100, 200);
  CHECK(q[4] == doctest::Approx(0.25).epsilon(1e-12));

  CHECK_THROWS_AS(geometric_feature(Box{10, 10, 10, 20}, 100, 100), DataError);
  CHECK_THROWS_AS(geometric_feature(Box{-1, 0, 10, 10}, 100, 100), DataError);
}

TEST_CASE("expression encoder basics") {
  GroundingModel model(small_config(), small_vocab(), /*seed=*/3);

  SUBCASE("one token gives that step's hidden state") {
    Graph g;
    Var q = model.encode_expression(g, {"amber"});
    Graph g2;
    LstmCellParams cell = LstmCellParams::wrap(
        const_cast<ParamStore&>(model.params()), "expr_lstm");
    LstmState st = lstm_step_token(g2, cell, model.vocab().lookup("amber"),
                                   lstm_zero_state(g2, model.config().dq));
    for (int64_t i = 0; i < model.config().dq; ++i) {
      CHECK(g.value(q)[i] == g2.value(st.h)[i]);
    }
  }
  SUBCASE("token order matters") {
    Graph g;
    Var q1 = model.encode_expression(g, {"amber", "basin", "cedar"});
    Var q2 = model.encode_expression(g, {"cedar", "basin", "amber"});
    bool any_diff = false;
    for (int64_t i = 0; i < model.config().dq; ++i) {
      if (g.value(q1)[i] != g.value(q2)[i]) any_diff = true;
    }
    CHECK(any_diff);
  }
  SUBCASE("zero parameters give a zero feature") {
    GroundingModel zeroed(small_config(), small_vocab(), 3);
    for (ParamTensor* p : zeroed.params().all()) p->value.fill(0.0);
    Graph g;
    Var q = zeroed.encode_expression(g, {"amber", "basin"});
    for (int64_t i = 0; i < zeroed.config().dq; ++i) CHECK(g.value(q)[i] == 0.0);
  }
  SUBCASE("empty token list is an error") {
    Graph g;
    CHECK_THROWS_AS(model.encode_expression(g, {}), DataError);
  }
}

TEST_CASE("image attention: identical cells give uniform weights and v = u") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 5);
  Rng rng(40);
  Tensor u = rand_vec(cfg.channels, rng);
  Tensor grid({cfg.grid, cfg.grid, cfg.channels});
  int64_t cells = cfg.grid * cfg.grid;
  for (int64_t c = 0; c < cells; ++c) {
    for (int64_t i = 0; i < cfg.channels; ++i) grid[c * cfg.channels + i] = u[i];
  }
  Graph g;
  Var q = model.encode_expression(g, {"amber", "basin"});
  auto ia = model.image_attention(g, grid, q);
  const Tensor& beta = g.value(ia.beta);
  for (int64_t c = 0; c < cells; ++c) {
    CHECK(beta[c] == doctest::Approx(1.0 / static_cast<double>(cells)).epsilon(1e-9));
  }
  const Tensor& v = g.value(ia.attended);
  for (int64_t i = 0; i < cfg.channels; ++i) {
    CHECK(v[i] == doctest::Approx(u[i]).epsilon(1e-9));
  }
}

TEST_CASE("image attention saturates to the dominant cell") {
  ModelConfig cfg = small_config();
  cfg.attn_hidden = 1;
  GroundingModel model(cfg, small_vocab(), 6);
  // Scorer: logit = 80 * tanh(sum(V_cell)); the winning cell saturates.
  model.params().get("img_attn.w").value = Tensor({1}, {80.0});
  Tensor wv({1, cfg.channels});
  wv.fill(1.0);
  model.params().get("img_attn.wv").value = wv;
  model.params().get("img_attn.wq").value = Tensor({1, cfg.dq});

  Tensor grid({cfg.grid, cfg.grid, cfg.channels});
  grid.fill(-10.0);  // tanh -> -1 -> logit -80
  int64_t winner = 2;
  Rng rng(41);
  Tensor win_vec = rand_vec(cfg.channels, rng);
  double s = 0;
  for (int64_t i = 0; i < cfg.channels; ++i) s += std::fabs(win_vec[i]);
  for (int64_t i = 0; i < cfg.channels; ++i) {
    grid[winner * cfg.channels + i] = win_vec[i] + 2.0 * s / cfg.channels + 10.0;
  }
  Graph g;
  Var q = model.encode_expression(g, {"cedar"});
  auto ia = model.image_attention(g, grid, q);
  const Tensor& v = g.value(ia.attended);
  for (int64_t i = 0; i < cfg.channels; ++i) {
    CHECK(std::fabs(v[i] - grid[winner * cfg.channels + i]) < 1e-10);
  }
}

TEST_CASE("image attention matches an independent recomputation") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 7);
  Rng rng(42);
  Tensor grid = testutil::random_tensor({cfg.grid, cfg.grid, cfg.channels}, rng);

  Graph g;
  Var qv = model.encode_expression(g, {"delta", "ember"});
  auto ia = model.image_attention(g, grid, qv);

  // Transcribe the scorer with plain loops.
  const Tensor& wv = model.params().get("img_attn.wv").value;
  const Tensor& wq = model.params().get("img_attn.wq").value;
  const Tensor& w = model.params().get("img_attn.w").value;
  const Tensor& q = g.value(qv);
  int64_t cells = cfg.grid * cfg.grid;
  std::vector<double> logits(static_cast<size_t>(cells));
  for (int64_t c = 0; c < cells; ++c) {
    double logit = 0;
    for (int64_t r = 0; r < cfg.attn_hidden; ++r) {
      double pre = 0;
      for (int64_t i = 0; i < cfg.channels; ++i) pre += wv.at2(r, i) * grid[c * cfg.channels + i];
      for (int64_t i = 0; i < cfg.dq; ++i) pre += wq.at2(r, i) * q[i];
      logit += w[r] * std::tanh(pre);
    }
    logits[static_cast<size_t>(c)] = logit;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  std::vector<double> beta(logits.size());
  for (size_t c = 0; c < logits.size(); ++c) {
    beta[c] = std::exp(logits[c] - mx);
    z += beta[c];
  }
  for (auto& b : beta) b /= z;
  std::vector<double> v(static_cast<size_t>(cfg.channels), 0.0);
  for (int64_t c = 0; c < cells; ++c) {
    for (int64_t i = 0; i < cfg.channels; ++i) {
      v[static_cast<size_t>(i)] += beta[static_cast<size_t>(c)] * grid[c * cfg.channels + i];
    }
  }
  for (int64_t c = 0; c < cells; ++c) {
    CHECK(g.value(ia.beta)[c] == doctest::Approx(beta[static_cast<size_t>(c)]).epsilon(1e-10));
  }
  for (int64_t i = 0; i < cfg.channels; ++i) {
    CHECK(g.value(ia.attended)[i] == doctest::Approx(v[static_cast<size_t>(i)]).epsilon(1e-10));
  }
}

TEST_CASE("memory pass: singleton and identical-fact attention") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 8);
  Rng rng(50);

  Graph g;
  Var q = model.encode_expression(g, {"fjord"});
  Var s0 = g.constant(rand_vec(cfg.dq, rng));

  SUBCASE("one valid fact takes all the mass") {
    auto step = model.emm_pass(g, std::vector<Var>{s0}, q, q);
    CHECK(g.value(step.alpha)[0] == 1.0);
  }
  SUBCASE("identical facts share mass uniformly") {
    std::vector<Var> facts{s0, s0, s0};
    auto step = model.emm_pass(g, facts, q, q);
    for (int i = 0; i < 3; ++i) {
      CHECK(g.value(step.alpha)[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }
  SUBCASE("no facts is an error") {
    CHECK_THROWS_AS(model.emm_pass(g, {}, q, q), DataError);
  }
}

TEST_CASE("memory pass matches a step-by-step transcription of the update rules") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 9);
  Rng rng(51);
  int64_t dq = cfg.dq;

  Tensor S({3, dq});
  for (int64_t i = 0; i < S.size(); ++i) S[i] = rng.uniform(-1, 1);
  Tensor q = rand_vec(dq, rng);
  Tensor m_prev = rand_vec(dq, rng);

  auto [m_next, alpha] = model.emm_pass_values(S, 3, q, m_prev);

  // Independent recomputation with plain loops.
  const Tensor& sw = model.params().get("fact_attn.score_w").value;
  const Tensor& sv = model.params().get("fact_attn.score_v").value;
  std::vector<double> logits(3);
  for (int64_t k = 0; k < 3; ++k) {
    std::vector<double> z(static_cast<size_t>(4 * dq));
    for (int64_t i = 0; i < dq; ++i) {
      double s = S.at2(k, i);
      z[static_cast<size_t>(i)] = s * q[i];
      z[static_cast<size_t>(dq + i)] = s * m_prev[i];
      z[static_cast<size_t>(2 * dq + i)] = std::fabs(s - q[i]);
      z[static_cast<size_t>(3 * dq + i)] = std::fabs(s - m_prev[i]);
    }
    double logit = 0;
    for (int64_t r = 0; r < cfg.emm_hidden; ++r) {
      double pre = 0;
      for (int64_t c = 0; c < 4 * dq; ++c) pre += sw.at2(r, c) * z[static_cast<size_t>(c)];
      logit += sv[r] * std::tanh(pre);
    }
    logits[static_cast<size_t>(k)] = logit;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double zsum = 0;
  std::vector<double> a(3);
  for (int k = 0; k < 3; ++k) {
    a[static_cast<size_t>(k)] = std::exp(logits[static_cast<size_t>(k)] - mx);
    zsum += a[static_cast<size_t>(k)];
  }
  for (auto& x : a) x /= zsum;

  CellRef attn(model.params(), "fact_attn.attn_lstm");
  std::vector<double> h(static_cast<size_t>(dq), 0.0), c(static_cast<size_t>(dq), 0.0);
  for (int64_t k = 0; k < 3; ++k) {
    std::vector<double> x(static_cast<size_t>(dq));
    for (int64_t i = 0; i < dq; ++i) x[static_cast<size_t>(i)] = S.at2(k, i);
    std::vector<double> h_prev = h, c_cell = c;
    std::vector<double> h_cand = h;
    attn.step(x, h_cand, c_cell);
    double ak = a[static_cast<size_t>(k)];
    for (size_t i = 0; i < h.size(); ++i) h[i] = ak * h_cand[i] + (1 - ak) * h_prev[i];
    c = c_cell;
  }
  CellRef mem(model.params(), "fact_attn.mem_lstm");
  std::vector<double> mh(m_prev.data(), m_prev.data() + dq);
  std::vector<double> mc(static_cast<size_t>(dq), 0.0);
  mem.step(h, mh, mc);

  for (int64_t k = 0; k < 3; ++k) {
    CHECK(alpha[k] == doctest::Approx(a[static_cast<size_t>(k)]).epsilon(1e-12));
  }
  for (int64_t i = 0; i < dq; ++i) {
    CHECK(m_next[i] == doctest::Approx(mh[static_cast<size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("emm_pass_values pads attention rows with exact zeros") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 10);
  Rng rng(52);
  Tensor S({4, cfg.dq});
  for (int64_t i = 0; i < 2 * cfg.dq; ++i) S[i] = rng.uniform(-1, 1);  // rows 2,3 stay zero
  Tensor q = rand_vec(cfg.dq, rng);
  auto [m, alpha] = model.emm_pass_values(S, 2, q, q);
  CHECK(alpha[2] == 0.0);
  CHECK(alpha[3] == 0.0);
  CHECK(alpha[0] + alpha[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.all_finite());
}

TEST_CASE("run_emm composes emm_pass exactly") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 11);
  Rng rng(53);
  Graph g;
  Var q = model.encode_expression(g, {"grove", "heron"});
  std::vector<Var> facts;
  for (int k = 0; k < 3; ++k) facts.push_back(g.constant(rand_vec(cfg.dq, rng)));

  auto run = model.run_emm(g, facts, q, 3);
  REQUIRE(run.alphas.size() == 3);

  // Manual composition in the same graph.
  Var m = q;  // memory_init = expression
  for (int t = 0; t < 3; ++t) {
    auto step = model.emm_pass(g, facts, q, m);
    m = step.m_next;
    for (int64_t k = 0; k < 3; ++k) {
      CHECK(g.value(run.alphas[static_cast<size_t>(t)])[k] == g.value(step.alpha)[k]);
    }
  }
  for (int64_t i = 0; i < cfg.dq; ++i) CHECK(g.value(run.m)[i] == g.value(m)[i]);

  SUBCASE("T=1 equals a single pass") {
    auto one = model.run_emm(g, facts, q, 1);
    auto step = model.emm_pass(g, facts, q, q);
    for (int64_t i = 0; i < cfg.dq; ++i) CHECK(g.value(one.m)[i] == g.value(step.m_next)[i]);
  }
  SUBCASE("default pass count is five") { CHECK(ModelConfig{}.passes == 5); }
}

TEST_CASE("soft attention differs from the single-pass memory module") {
  ModelConfig cfg = small_config();
  cfg.fact_attention = FactAttentionKind::Emm;
  GroundingModel emm_model(cfg, small_vocab(), 12);
  ModelConfig soft_cfg = cfg;
  soft_cfg.fact_attention = FactAttentionKind::Soft;
  GroundingModel soft_model(soft_cfg, small_vocab(), 12);  // same seed: shared tensors match

  Rng rng(54);
  Tensor f0 = rand_vec(cfg.dq, rng), f1 = rand_vec(cfg.dq, rng);
  Graph ge, gs;
  Var qe = emm_model.encode_expression(ge, {"islet", "joule"});
  Var qs = soft_model.encode_expression(gs, {"islet", "joule"});
  std::vector<Var> fe{ge.constant(f0), ge.constant(f1)};
  std::vector<Var> fs{gs.constant(f0), gs.constant(f1)};
  auto emm_out = emm_model.run_emm(ge, fe, qe, 1);
  auto soft_out = soft_model.soft_fact_attention(gs, fs, qs);

  bool differs = false;
  for (int64_t i = 0; i < cfg.dq; ++i) {
    if (ge.value(emm_out.m)[i] != gs.value(soft_out.f_e)[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("fusion head block structure") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 13);
  Rng rng(55);

  SUBCASE("zero fusion matrix gives a zero feature") {
    model.params().get("match.fuse.w").value.fill(0.0);
    Graph g;
    Var fe = g.constant(rand_vec(cfg.dq, rng));
    Var fn = model.fuse_candidate(g, std::nullopt, std::nullopt, fe, std::nullopt);
    for (int64_t i = 0; i < cfg.dq; ++i) CHECK(g.value(fn)[i] == 0.0);
  }
  SUBCASE("identity block on f_e selects it") {
    ParamTensor& w = model.params().get("match.fuse.w");
    w.value.fill(0.0);
    int64_t fe_offset = cfg.app_fc + cfg.geo_fc;
    for (int64_t i = 0; i < cfg.dq; ++i) w.value.at2(i, fe_offset + i) = 1.0;
    Graph g;
    Tensor fe_val = rand_vec(cfg.dq, rng);
    Var fn = model.fuse_candidate(g, std::nullopt, std::nullopt, g.constant(fe_val),
                                  std::nullopt);
    for (int64_t i = 0; i < cfg.dq; ++i) CHECK(g.value(fn)[i] == fe_val[i]);
  }
  SUBCASE("matches an independent matrix multiply") {
    Graph g;
    Tensor app = rand_vec(cfg.app_dim, rng);
    Tensor geo({5}, {0.1, 0.2, 0.6, 0.7, 0.25});
    Tensor fe = rand_vec(cfg.dq, rng);
    Tensor v = rand_vec(cfg.channels, rng);
    Var fn = model.fuse_candidate(g, g.constant(app), g.constant(geo), g.constant(fe),
                                  g.constant(v));

    auto fc = [](const Tensor& w, const Tensor& b, const Tensor& x) {
      std::vector<double> out(static_cast<size_t>(w.dim(0)));
      for (int64_t r = 0; r < w.dim(0); ++r) {
        double acc = b[r];
        for (int64_t c = 0; c < w.dim(1); ++c) acc += w.at2(r, c) * x[c];
        out[static_cast<size_t>(r)] = std::max(acc, 0.0);
      }
      return out;
    };
    auto fa = fc(model.params().get("match.app_fc.w").value,
                 model.params().get("match.app_fc.b").value, app);
    auto fg = fc(model.params().get("match.geo_fc.w").value,
                 model.params().get("match.geo_fc.b").value, geo);
    std::vector<double> concat;
    concat.insert(concat.end(), fa.begin(), fa.end());
    concat.insert(concat.end(), fg.begin(), fg.end());
    for (int64_t i = 0; i < cfg.dq; ++i) concat.push_back(fe[i]);
    for (int64_t i = 0; i < cfg.channels; ++i) concat.push_back(v[i]);
    const Tensor& w = model.params().get("match.fuse.w").value;
    for (int64_t r = 0; r < cfg.dq; ++r) {
      double acc = 0;
      for (int64_t c = 0; c < w.dim(1); ++c) acc += w.at2(r, c) * concat[static_cast<size_t>(c)];
      CHECK(g.value(fn)[r] == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("candidate scoring") {
  ModelConfig cfg = small_config();
  GroundingModel model(cfg, small_vocab(), 14);
  Rng rng(56);
  Graph g;
  Var q = g.constant(rand_vec(cfg.dq, rng));

  SUBCASE("identical candidates tie uniformly, argmax picks index 0") {
    Var f = g.constant(rand_vec(cfg.dq, rng));
    std::vector<Var> fused{f, f, f, f};
    Var probs = model.score_candidates(g, q, fused);
    for (int i = 0; i < 4; ++i) {
      CHECK(g.value(probs)[i] == doctest::Approx(0.25).epsilon(1e-12));
    }
    const Tensor& pv = g.value(probs);
    int64_t best = 0;
    for (int64_t i = 1; i < 4; ++i) {
      if (pv[i] > pv[best]) best = i;
    }
    CHECK(best == 0);
  }
  SUBCASE("single candidate gets probability one") {
    std::vector<Var> fused{g.constant(rand_vec(cfg.dq, rng))};
    Var probs = model.score_candidates(g, q, fused);
    CHECK(g.value(probs)[0] == 1.0);
  }
  SUBCASE("no candidates is an error") {
    CHECK_THROWS_AS(model.score_candidates(g, q, {}), DataError);
  }
  SUBCASE("adding a constant vector to every candidate leaves probabilities unchanged") {
    std::vector<Var> fused;
    for (int i = 0; i < 3; ++i) fused.push_back(g.constant(rand_vec(cfg.dq, rng)));
    Var probs = model.score_candidates(g, q, fused);
    Var shift = g.constant(rand_vec(cfg.dq, rng));
    std::vector<Var> shifted;
    for (Var f : fused) shifted.push_back(g.add(f, shift));
    Var probs2 = model.score_candidates(g, q, shifted);
    for (int i = 0; i < 3; ++i) {
      CHECK(g.value(probs2)[i] == doctest::Approx(g.value(probs)[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("forward ablations ignore the ablated inputs") {
  GroundingFixture fx = testutil::make_grounding_fixture(Signal::Mixed, 4, /*seed=*/77);

  SUBCASE("no_facts output is independent of the fact store") {
    ModelConfig cfg = fx.config;
    cfg.mode = Mode::NoFacts;
    GroundingModel model(cfg, fx.vocab, 20);
    RetrievalContext other = fx.retrieval();
    FactStore empty_store;
    RetrievalContext empty{&empty_store, fx.retrieval().embeddings};
    for (const Sample& s : fx.samples) {
      ForwardResult a = model.forward(s, &fx.features, &other);
      ForwardResult b = model.forward(s, &fx.features, &empty);
      ForwardResult c = model.forward(s, &fx.features, nullptr);
      for (int64_t i = 0; i < a.probs.size(); ++i) {
        CHECK(a.probs[i] == b.probs[i]);
        CHECK(a.probs[i] == c.probs[i]);
      }
    }
  }
  SUBCASE("no_image output is independent of the feature pack") {
    ModelConfig cfg = fx.config;
    cfg.mode = Mode::NoImage;
    GroundingModel model(cfg, fx.vocab, 21);
    Rng rng(60);
    FeaturePack other;
    for (size_t i = 0; i < fx.samples.size(); ++i) {
      const Sample& s = fx.samples[i];
      other.set_grid(s.image_id,
                     testutil::random_tensor({fx.config.grid, fx.config.grid, fx.config.channels},
                                             rng));
      for (size_t c = 0; c < s.candidates.size(); ++c) {
        other.set_appearance(s.image_id, static_cast<int64_t>(c),
                             testutil::random_tensor({fx.config.app_dim}, rng));
      }
    }
    RetrievalContext ctx = fx.retrieval();
    for (const Sample& s : fx.samples) {
      ForwardResult a = model.forward(s, &fx.features, &ctx);
      ForwardResult b = model.forward(s, &other, &ctx);
      ForwardResult c = model.forward(s, nullptr, &ctx);
      for (int64_t i = 0; i < a.probs.size(); ++i) {
        CHECK(a.probs[i] == b.probs[i]);
        CHECK(a.probs[i] == c.probs[i]);
      }
    }
  }
}

TEST_CASE("partial_expression filters tokens by pos tag") {
  CHECK(filter_partial_tokens({"give", "me", "red", "apple"}, {"VB", "PRP", "JJ", "NN"}) ==
        std::vector<std::string>{"red", "apple"});
  CHECK(filter_partial_tokens({"run"}, {"VB"}) == std::vector<std::string>{"<unk>"});
  CHECK_THROWS_AS(filter_partial_tokens({"a", "b"}, {"NN"}), DataError);

  GroundingFixture fx = testutil::make_grounding_fixture(Signal::Fact, 2, /*seed=*/78);
  ModelConfig cfg = fx.config;
  cfg.mode = Mode::PartialExpression;
  GroundingModel model(cfg, fx.vocab, 22);
  RetrievalContext ctx = fx.retrieval();

  Sample s = fx.samples[0];
  // Without pos tags the mode must fail loudly.
  CHECK_THROWS_AS(model.forward(s, &fx.features, &ctx), DataError);
  s.pos = std::vector<std::string>(s.tokens.size(), "NN");
  ForwardResult all_nouns = model.forward(s, &fx.features, &ctx);
  CHECK(all_nouns.probs.size() == 2);
}

TEST_CASE("forward traces are normalized with zero mass on padding") {
  GroundingFixture fx = testutil::make_grounding_fixture(Signal::Fact, 4, /*seed=*/79);
  GroundingModel model(fx.config, fx.vocab, 23);
  RetrievalContext ctx = fx.retrieval();
  for (const Sample& s : fx.samples) {
    ForwardResult r = model.forward(s, &fx.features, &ctx);
    double total = 0;
    for (int64_t i = 0; i < r.probs.size(); ++i) total += r.probs[i];
    CHECK(std::fabs(total - 1.0) <= 1e-9);

    double beta_total = 0;
    for (int64_t i = 0; i < r.trace.beta.size(); ++i) beta_total += r.trace.beta[i];
    CHECK(std::fabs(beta_total - 1.0) <= 1e-9);

    for (size_t c = 0; c < r.trace.fact_alphas.size(); ++c) {
      int64_t valid = static_cast<int64_t>(r.trace.fact_ids[c].size());
      if (valid == 0) continue;
      CHECK(r.trace.fact_alphas[c].size() == static_cast<size_t>(fx.config.passes));
      for (const Tensor& alpha : r.trace.fact_alphas[c]) {
        double a_total = 0;
        for (int64_t k = 0; k < valid; ++k) a_total += alpha[k];
        CHECK(std::fabs(a_total - 1.0) <= 1e-9);
        for (int64_t k = valid; k < alpha.size(); ++k) CHECK(alpha[k] == 0.0);
      }
    }
  }
}

TEST_CASE("full-loss gradients match finite differences at reduced dims") {
  GroundingFixture fx = testutil::make_grounding_fixture(Signal::Fact, 2, /*seed=*/80);
  ModelConfig cfg = fx.config;
  cfg.dq = 12;
  cfg.passes = 2;
  GroundingModel model(cfg, fx.vocab, 24);
  RetrievalContext ctx = fx.retrieval();
  const Sample& s = fx.samples[0];

  auto loss_fn = [&](bool with_grad) {
    Graph g;
    Var loss = model.loss(g, s, &fx.features, &ctx, /*fact_supervision=*/true, /*lambda=*/1.0);
    if (with_grad) g.backward(loss);
    return g.value(loss)[0];
  };
  auto params = model.params().all();
  GradCheckReport rep = finite_diff_check(loss_fn, params, 1e-5);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("two-candidate overfit: the fact-backed candidate wins after training") {
  GroundingFixture fx = testutil::make_grounding_fixture(Signal::Fact, 1, /*seed=*/81);
  GroundingModel model(fx.config, fx.vocab, 25);
  RetrievalContext ctx = fx.retrieval();
  const Sample& s = fx.samples[0];

  SgdUpdater updater(SgdConfig{});
  auto params = model.params().all();
  for (int step = 0; step < 200; ++step) {
    model.params().zero_grad();
    Graph g;
    Var loss = model.loss(g, s, &fx.features, &ctx, false, 0.0);
    g.backward(loss);
    updater.step(params, /*lr=*/2.0);
  }
  ForwardResult r = model.forward(s, &fx.features, &ctx);
  CHECK(r.predicted == s.target_index);
  CHECK(r.probs[s.target_index] > 0.9);
}
