#include "kbref/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include "kbref/errors.hpp"

namespace kbref {

Tensor geometric_feature(const Box& box, double img_w, double img_h) {
  if (!(img_w > 0) || !(img_h > 0)) throw DataError("geometric_feature: bad image size");
  if (!(box.x_tl >= 0 && box.x_tl < box.x_br && box.x_br <= img_w) ||
      !(box.y_tl >= 0 && box.y_tl < box.y_br && box.y_br <= img_h)) {
    throw DataError("geometric_feature: degenerate or out-of-range box");
  }
  double w = box.x_br - box.x_tl;
  double h = box.y_br - box.y_tl;
  return Tensor({5}, {box.x_tl / img_w, box.y_tl / img_h, box.x_br / img_w, box.y_br / img_h,
                      (w * h) / (img_w * img_h)});
}

std::vector<std::string> filter_partial_tokens(const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& pos) {
  if (tokens.size() != pos.size()) {
    throw DataError("partial_expression: pos tags do not align with tokens");
  }
  auto keep = [](const std::string& tag) {
    std::string low;
    for (char c : tag) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return low.rfind("nn", 0) == 0 || low.rfind("jj", 0) == 0 || low.rfind("noun", 0) == 0 ||
           low.rfind("adj", 0) == 0;
  };
  std::vector<std::string> out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (keep(pos[i])) out.push_back(tokens[i]);
  }
  if (out.empty()) out.push_back("<unk>");
  return out;
}

GroundingModel::GroundingModel(ModelConfig config, Vocabulary vocab, uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  const int64_t v = vocab_.size();
  const int64_t dq = config_.dq;
  auto radius = [](int64_t fan) { return 1.0 / std::sqrt(static_cast<double>(fan)); };

  expr_cell_ = LstmCellParams::create(params_, "expr_lstm", v, dq, seed);
  fact_cell_ = LstmCellParams::create(params_, "fact_lstm", v, dq, seed);

  img_wv_ = &params_.create_uniform("img_attn.wv", {config_.attn_hidden, config_.channels},
                                    radius(config_.channels), seed);
  img_wq_ = &params_.create_uniform("img_attn.wq", {config_.attn_hidden, dq}, radius(dq), seed);
  img_w_ = &params_.create_uniform("img_attn.w", {config_.attn_hidden},
                                   radius(config_.attn_hidden), seed);

  scorer_.w = &params_.create_uniform("fact_attn.score_w", {config_.emm_hidden, 4 * dq},
                                      radius(4 * dq), seed);
  scorer_.v = &params_.create_uniform("fact_attn.score_v", {config_.emm_hidden},
                                      radius(config_.emm_hidden), seed);
  if (config_.fact_attention == FactAttentionKind::Emm) {
    attn_cell_ = LstmCellParams::create(params_, "fact_attn.attn_lstm", dq, dq, seed);
    mem_cell_ = LstmCellParams::create(params_, "fact_attn.mem_lstm", dq, dq, seed);
  }

  app_fc_w_ = &params_.create_uniform("match.app_fc.w", {config_.app_fc, config_.app_dim},
                                      radius(config_.app_dim), seed);
  app_fc_b_ =
      &params_.create_uniform("match.app_fc.b", {config_.app_fc}, radius(config_.app_dim), seed);
  geo_fc_w_ = &params_.create_uniform("match.geo_fc.w", {config_.geo_fc, 5}, radius(5), seed);
  geo_fc_b_ = &params_.create_uniform("match.geo_fc.b", {config_.geo_fc}, radius(5), seed);
  const int64_t fused_in = config_.app_fc + config_.geo_fc + dq + config_.channels;
  fuse_w_ = &params_.create_uniform("match.fuse.w", {dq, fused_in}, radius(fused_in), seed);
}

Var GroundingModel::encode_sequence(Graph& g, const LstmCellParams& cell,
                                    const std::vector<std::string>& tokens, bool average) const {
  if (tokens.empty()) throw DataError("cannot encode an empty token list");
  LstmState state = lstm_zero_state(g, config_.dq);
  Var acc;
  for (const std::string& tok : tokens) {
    int64_t id = vocab_.lookup(tok);
    state = lstm_step_token(g, cell, id, state);
    acc = acc.valid() ? g.add(acc, state.h) : state.h;
  }
  if (average && tokens.size() > 1) {
    acc = g.scale(acc, 1.0 / static_cast<double>(tokens.size()));
  }
  return acc;
}

Var GroundingModel::encode_expression(Graph& g, const std::vector<std::string>& tokens) const {
  return encode_sequence(g, expr_cell_, tokens, /*average=*/false);
}

Var GroundingModel::encode_fact(Graph& g, const std::vector<std::string>& tokens) const {
  return encode_sequence(g, fact_cell_, tokens, /*average=*/true);
}

GroundingModel::ImageAttention GroundingModel::image_attention(Graph& g, const Tensor& grid,
                                                               Var q) const {
  const int64_t side = config_.grid, ch = config_.channels;
  const int64_t cells = side * side;
  if (grid.rank() != 3 || grid.dim(0) != side || grid.dim(1) != side || grid.dim(2) != ch) {
    throw ShapeError("image_attention: grid features " + grid.shape_str() + " do not match config");
  }
  Var wq_q = g.matvec(g.param(*img_wq_), q);
  Var w = g.param(*img_w_);
  Var wv = g.param(*img_wv_);

  std::vector<double> flat(grid.data(), grid.data() + grid.size());
  Var grid_matrix = g.constant(Tensor({cells, ch}, std::move(flat)));

  std::vector<Var> logits;
  logits.reserve(static_cast<size_t>(cells));
  for (int64_t c = 0; c < cells; ++c) {
    std::vector<double> cell(grid.data() + c * ch, grid.data() + (c + 1) * ch);
    Var cell_var = g.constant(Tensor({ch}, std::move(cell)));
    logits.push_back(g.dot(w, g.tanh(g.add(g.matvec(wv, cell_var), wq_q))));
  }
  Var beta = g.softmax(g.concat(logits));
  Var attended = g.weighted_rows(grid_matrix, beta);
  return ImageAttention{attended, beta};
}

Var GroundingModel::initial_memory(Graph& g, Var q) const {
  if (config_.memory_init == MemoryInit::Expression) return q;
  return g.zeros({config_.dq});
}

// z_k = [s_k o q ; s_k o m ; |s_k - q| ; |s_k - m|], scored through the
// shared tanh bottleneck; one logit per valid fact.
Var GroundingModel::fact_scores(Graph& g, std::span<const Var> facts, Var q, Var m_prev) const {
  Var sw = g.param(*scorer_.w);
  Var sv = g.param(*scorer_.v);
  std::vector<Var> logits;
  logits.reserve(facts.size());
  for (Var s : facts) {
    std::array<Var, 4> parts = {g.mul(s, q), g.mul(s, m_prev), g.abs(g.sub(s, q)),
                                g.abs(g.sub(s, m_prev))};
    Var z = g.concat(parts);
    logits.push_back(g.dot(sv, g.tanh(g.matvec(sw, z))));
  }
  return g.concat(logits);
}

GroundingModel::EmmStep GroundingModel::emm_pass(Graph& g, std::span<const Var> facts, Var q,
                                                 Var m_prev) const {
  if (facts.empty()) throw DataError("emm_pass: no valid facts");
  if (config_.fact_attention != FactAttentionKind::Emm) {
    throw DataError("emm_pass: model configured for soft attention");
  }
  Var alpha = g.softmax(fact_scores(g, facts, q, m_prev));

  // Gated recurrence: the hidden state moves toward the cell output only as
  // far as the attention weight allows; the cell state is carried through.
  LstmState state = lstm_zero_state(g, config_.dq);
  Var one = g.constant(Tensor::scalar(1.0));
  for (size_t k = 0; k < facts.size(); ++k) {
    Var a_k = g.pick(alpha, static_cast<int64_t>(k));
    LstmState cand = lstm_step(g, attn_cell_, facts[k], state);
    Var h = g.add(g.mul_scalar(cand.h, a_k), g.mul_scalar(state.h, g.sub(one, a_k)));
    state = LstmState{h, cand.c};
  }

  // Memory update: a cell step on the last hidden state, with the previous
  // memory as its hidden input and a fresh cell state.
  LstmState mem = lstm_step(g, mem_cell_, state.h, LstmState{m_prev, g.zeros({config_.dq})});
  return EmmStep{mem.h, alpha};
}

GroundingModel::EmmRun GroundingModel::run_emm(Graph& g, std::span<const Var> facts, Var q,
                                               int64_t passes) const {
  if (passes < 1) throw DataError("run_emm: passes must be >= 1");
  EmmRun run;
  Var m = initial_memory(g, q);
  for (int64_t t = 0; t < passes; ++t) {
    EmmStep step = emm_pass(g, facts, q, m);
    m = step.m_next;
    run.alphas.push_back(step.alpha);
  }
  run.m = m;
  return run;
}

std::pair<Tensor, Tensor> GroundingModel::emm_pass_values(const Tensor& s, int64_t valid_count,
                                                          const Tensor& q,
                                                          const Tensor& m_prev) const {
  if (s.rank() != 2 || s.dim(1) != config_.dq) {
    throw ShapeError("emm_pass_values: fact set must be [K, dq]");
  }
  if (valid_count < 1 || valid_count > s.dim(0)) {
    throw DataError("emm_pass_values: valid_count out of range");
  }
  Graph g;
  std::vector<Var> facts;
  for (int64_t k = 0; k < valid_count; ++k) {
    std::vector<double> row(s.data() + k * s.dim(1), s.data() + (k + 1) * s.dim(1));
    facts.push_back(g.constant(Tensor({s.dim(1)}, std::move(row))));
  }
  EmmStep step = emm_pass(g, facts, g.constant(q), g.constant(m_prev));
  Tensor alpha_padded({s.dim(0)});
  const Tensor& alpha = g.value(step.alpha);
  for (int64_t k = 0; k < valid_count; ++k) alpha_padded[k] = alpha[k];
  return {g.value(step.m_next), alpha_padded};
}

GroundingModel::SoftAttention GroundingModel::soft_fact_attention(Graph& g,
                                                                  std::span<const Var> facts,
                                                                  Var q) const {
  if (facts.empty()) throw DataError("soft_fact_attention: no valid facts");
  Var m0 = initial_memory(g, q);
  Var alpha = g.softmax(fact_scores(g, facts, q, m0));
  Var stacked = g.reshape(g.concat(facts),
                          {static_cast<int64_t>(facts.size()), config_.dq});
  return SoftAttention{g.weighted_rows(stacked, alpha), alpha};
}

Var GroundingModel::fuse_candidate(Graph& g, std::optional<Var> appearance,
                                   std::optional<Var> geometry, std::optional<Var> fact_feature,
                                   std::optional<Var> image_feature) const {
  Var fa = appearance
               ? g.relu(g.add(g.matvec(g.param(*app_fc_w_), *appearance), g.param(*app_fc_b_)))
               : g.zeros({config_.app_fc});
  Var fg = geometry
               ? g.relu(g.add(g.matvec(g.param(*geo_fc_w_), *geometry), g.param(*geo_fc_b_)))
               : g.zeros({config_.geo_fc});
  Var fe = fact_feature ? *fact_feature : g.zeros({config_.dq});
  Var v = image_feature ? *image_feature : g.zeros({config_.channels});
  std::array<Var, 4> parts = {fa, fg, fe, v};
  return g.matvec(g.param(*fuse_w_), g.concat(parts));
}

Var GroundingModel::score_candidates(Graph& g, Var q, std::span<const Var> fused) const {
  if (fused.empty()) throw DataError("score_candidates: no candidates");
  std::vector<Var> logits;
  logits.reserve(fused.size());
  for (Var f : fused) logits.push_back(g.dot(q, f));
  return g.softmax(g.concat(logits));
}

GroundingModel::BuildOutputs GroundingModel::build(Graph& g, const Sample& sample,
                                                   const FeaturePack* features,
                                                   const RetrievalContext* retrieval) const {
  const Mode mode = config_.mode;
  const int64_t n = static_cast<int64_t>(sample.candidates.size());
  if (n < 1) throw DataError("sample has no candidates");

  std::vector<std::string> tokens = sample.tokens;
  if (mode == Mode::PartialExpression) {
    if (!sample.pos) {
      throw DataError("partial_expression mode requires per-token pos tags in the dataset");
    }
    tokens = filter_partial_tokens(sample.tokens, *sample.pos);
  }

  Var q = encode_expression(g, tokens);

  std::optional<Var> attended_image;
  Var beta;
  if (mode != Mode::NoImage) {
    if (!features) throw DataError("mode '" + to_string(mode) + "' requires image features");
    ImageAttention ia = image_attention(g, features->grid(sample.image_id), q);
    attended_image = ia.attended;
    beta = ia.beta;
  }

  const bool use_facts = mode != Mode::NoFacts;
  if (use_facts && (!retrieval || !retrieval->store || !retrieval->embeddings)) {
    throw DataError("mode '" + to_string(mode) + "' requires a fact store and embeddings");
  }

  BuildOutputs out;
  out.result.trace.fact_alphas.resize(static_cast<size_t>(n));
  out.result.trace.fact_ids.resize(static_cast<size_t>(n));
  out.last_alphas.resize(static_cast<size_t>(n));

  std::unordered_map<int64_t, Var> fact_cache;
  std::vector<Var> fused;
  fused.reserve(static_cast<size_t>(n));

  for (int64_t i = 0; i < n; ++i) {
    const SampleCandidate& cand = sample.candidates[static_cast<size_t>(i)];

    std::optional<Var> f_e;
    std::vector<Var> pass_alphas;
    int64_t valid = 0;
    if (use_facts) {
      std::vector<Fact> cat_facts =
          retrieval->store->facts_for_category(normalize_category(cand.category));
      RetrievalResult rr = retrieve_topk(*retrieval->embeddings, tokens, cat_facts, config_.k);
      valid = static_cast<int64_t>(rr.ids.size());
      out.result.trace.fact_ids[static_cast<size_t>(i)] = rr.ids;
      if (valid > 0) {
        std::vector<Var> fact_vars;
        fact_vars.reserve(rr.ids.size());
        for (int64_t fid : rr.ids) {
          auto it = fact_cache.find(fid);
          if (it == fact_cache.end()) {
            Var enc = encode_fact(g, retrieval->store->fact(fid).tokens);
            it = fact_cache.emplace(fid, enc).first;
          }
          fact_vars.push_back(it->second);
        }
        if (config_.fact_attention == FactAttentionKind::Emm) {
          EmmRun run = run_emm(g, fact_vars, q, config_.passes);
          f_e = run.m;
          pass_alphas = std::move(run.alphas);
        } else {
          SoftAttention sa = soft_fact_attention(g, fact_vars, q);
          f_e = sa.f_e;
          pass_alphas = {sa.alpha};
        }
        out.last_alphas[static_cast<size_t>(i)] = pass_alphas.back();
      }
      // A candidate whose category has no facts contributes a zero fact
      // block instead of failing the whole sample.
    }

    std::optional<Var> appearance;
    std::optional<Var> geometry;
    if (mode != Mode::NoImage) {
      const Tensor& app = features->appearance(sample.image_id, i);
      if (app.size() != config_.app_dim) {
        throw ShapeError("appearance feature " + app.shape_str() + " does not match config");
      }
      appearance = g.constant(app);
      geometry =
          g.constant(geometric_feature(cand.box, sample.image_width, sample.image_height));
    }
    fused.push_back(fuse_candidate(g, appearance, geometry, f_e, attended_image));

    // Trace rows padded to K.
    auto& rows = out.result.trace.fact_alphas[static_cast<size_t>(i)];
    for (Var a : pass_alphas) {
      Tensor padded({config_.k});
      const Tensor& av = g.value(a);
      for (int64_t k = 0; k < valid; ++k) padded[k] = av[k];
      rows.push_back(std::move(padded));
    }
  }

  out.probs = score_candidates(g, q, fused);
  out.result.probs = g.value(out.probs);
  out.result.predicted = 0;
  for (int64_t i = 1; i < n; ++i) {
    if (out.result.probs[i] > out.result.probs[out.result.predicted]) out.result.predicted = i;
  }
  if (mode != Mode::NoImage) {
    Tensor b({config_.grid, config_.grid});
    const Tensor& bv = g.value(beta);
    for (int64_t i = 0; i < bv.size(); ++i) b[i] = bv[i];
    out.result.trace.beta = std::move(b);
  }
  return out;
}

ForwardResult GroundingModel::forward(const Sample& sample, const FeaturePack* features,
                                      const RetrievalContext* retrieval) const {
  Graph g;
  return build(g, sample, features, retrieval).result;
}

Var GroundingModel::loss(Graph& g, const Sample& sample, const FeaturePack* features,
                         const RetrievalContext* retrieval, bool fact_supervision, double lambda,
                         ForwardResult* out) const {
  BuildOutputs built = build(g, sample, features, retrieval);
  if (out) *out = built.result;
  Var total = g.nll(built.probs, sample.target_index);

  if (fact_supervision && lambda != 0.0 && sample.gt_fact_id && config_.mode != Mode::NoFacts) {
    const auto& ids = built.result.trace.fact_ids[static_cast<size_t>(sample.target_index)];
    auto it = std::find(ids.begin(), ids.end(), *sample.gt_fact_id);
    Var alpha = built.last_alphas[static_cast<size_t>(sample.target_index)];
    if (it != ids.end() && alpha.valid()) {
      Tensor onehot({static_cast<int64_t>(ids.size())});
      onehot[it - ids.begin()] = 1.0;
      total = g.add(total, g.scale(g.bce_mean(alpha, std::move(onehot)), lambda));
    }
  }
  return total;
}

}  // namespace kbref
