#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbref/config.hpp"
#include "kbref/dataset.hpp"
#include "kbref/embeddings.hpp"
#include "kbref/fact_store.hpp"
#include "kbref/graph.hpp"
#include "kbref/nn.hpp"
#include "kbref/params.hpp"
#include "kbref/tensor.hpp"
#include "kbref/text_analysis.hpp"

namespace kbref {

// Normalized 5-vector [x_tl/W, y_tl/H, x_br/W, y_br/H, area ratio].
// Throws DataError for a degenerate (zero-area) or out-of-range box.
Tensor geometric_feature(const Box& box, double img_w, double img_h);

// Keeps tokens whose tag marks a noun or adjective (tags starting with
// "nn", "jj", "noun" or "adj", case-insensitive). Falls back to a single
// "<unk>" token when nothing survives.
std::vector<std::string> filter_partial_tokens(const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& pos);

// Per-forward attention snapshot: the image attention map plus every
// per-pass fact attention row for every candidate. Alpha rows are padded to
// the configured K with exact zeros.
struct AttentionTrace {
  Tensor beta;                                   // [grid, grid]; empty in no_image
  std::vector<std::vector<Tensor>> fact_alphas;  // [candidate][pass] -> [K]
  std::vector<std::vector<int64_t>> fact_ids;    // [candidate] -> retrieved fact ids
};

struct ForwardResult {
  Tensor probs;            // [n_candidates]
  int64_t predicted = 0;   // argmax; ties resolved to the lowest index
  AttentionTrace trace;
};

struct RetrievalContext {
  const FactStore* store = nullptr;
  const WordEmbeddings* embeddings = nullptr;
};

// Expression-conditioned grounding network: an expression encoder feeding a
// top-down image attention, a per-candidate multi-pass fact attention over
// retrieved commonsense facts, and an inner-product matching head.
class GroundingModel {
 public:
  GroundingModel(ModelConfig config, Vocabulary vocab, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // --- submodules, exposed for direct testing ---

  // Sum of encoder hidden states over the token sequence -> [dq].
  Var encode_expression(Graph& g, const std::vector<std::string>& tokens) const;
  // Mean of encoder hidden states -> [dq]; separate parameters from the
  // expression encoder.
  Var encode_fact(Graph& g, const std::vector<std::string>& tokens) const;

  struct ImageAttention {
    Var attended;  // [channels]
    Var beta;      // [grid*grid], sums to 1
  };
  ImageAttention image_attention(Graph& g, const Tensor& grid, Var q) const;

  struct EmmStep {
    Var m_next;  // [dq]
    Var alpha;   // [valid], sums to 1
  };
  // One memory pass over the valid fact vectors.
  EmmStep emm_pass(Graph& g, std::span<const Var> facts, Var q, Var m_prev) const;

  struct EmmRun {
    Var m;                    // memory after the last pass
    std::vector<Var> alphas;  // one [valid] row per pass
  };
  // Iterates emm_pass `passes` times from the configured initial memory.
  EmmRun run_emm(Graph& g, std::span<const Var> facts, Var q, int64_t passes) const;

  // Value-level wrapper matching the padded-set shape: S is [K, dq] with
  // zero rows past valid_count; the returned alpha has length K with exact
  // zeros on padded rows.
  std::pair<Tensor, Tensor> emm_pass_values(const Tensor& s, int64_t valid_count, const Tensor& q,
                                            const Tensor& m_prev) const;

  // Single-pass weighted sum f_e = sum_k alpha_k s_k with the same scorer.
  struct SoftAttention {
    Var f_e;
    Var alpha;
  };
  SoftAttention soft_fact_attention(Graph& g, std::span<const Var> facts, Var q) const;

  // Fusion head. Absent blocks (ablations, no retrieved facts) enter as
  // exact zeros.
  Var fuse_candidate(Graph& g, std::optional<Var> appearance, std::optional<Var> geometry,
                     std::optional<Var> fact_feature, std::optional<Var> image_feature) const;

  // Softmax over inner products <q, f_n>.
  Var score_candidates(Graph& g, Var q, std::span<const Var> fused) const;

  // --- full passes ---

  struct BuildOutputs {
    Var probs;
    std::vector<Var> last_alphas;  // per candidate; invalid Var when no facts
    ForwardResult result;
  };
  BuildOutputs build(Graph& g, const Sample& sample, const FeaturePack* features,
                     const RetrievalContext* retrieval) const;

  ForwardResult forward(const Sample& sample, const FeaturePack* features,
                        const RetrievalContext* retrieval) const;

  // Cross entropy against the target candidate, plus the optional last-pass
  // fact supervision term weighted by lambda (skipped when the groundtruth
  // fact was not retrieved for the target candidate).
  Var loss(Graph& g, const Sample& sample, const FeaturePack* features,
           const RetrievalContext* retrieval, bool fact_supervision, double lambda,
           ForwardResult* out = nullptr) const;

 private:
  struct Scorer {
    ParamTensor* w = nullptr;  // [emm_hidden, 4*dq]
    ParamTensor* v = nullptr;  // [emm_hidden]
  };

  Var initial_memory(Graph& g, Var q) const;
  Var fact_scores(Graph& g, std::span<const Var> facts, Var q, Var m_prev) const;
  Var encode_sequence(Graph& g, const LstmCellParams& cell,
                      const std::vector<std::string>& tokens, bool average) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParamStore params_;

  LstmCellParams expr_cell_;
  LstmCellParams fact_cell_;
  ParamTensor* img_wv_ = nullptr;
  ParamTensor* img_wq_ = nullptr;
  ParamTensor* img_w_ = nullptr;
  Scorer scorer_;
  LstmCellParams attn_cell_;
  LstmCellParams mem_cell_;
  ParamTensor* app_fc_w_ = nullptr;
  ParamTensor* app_fc_b_ = nullptr;
  ParamTensor* geo_fc_w_ = nullptr;
  ParamTensor* geo_fc_b_ = nullptr;
  ParamTensor* fuse_w_ = nullptr;
};

}  // namespace kbref
