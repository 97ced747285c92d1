#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kbref/fact.hpp"
#include "kbref/tensor.hpp"
#include "kbref/text_analysis.hpp"

namespace kbref {

struct SkipgramConfig {
  int64_t dim = 100;
  int64_t window = 5;     // maximum context radius; the effective radius of
                          // each center is sampled in [1, window]
  int64_t negatives = 5;  // negative samples per (center, context) pair
  int64_t epochs = 5;
  double lr = 0.025;      // decays linearly to lr_min over all updates
  double lr_min = 1e-4;
  uint64_t seed = 0;
};

struct SkipgramStats {
  std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
};

class WordEmbeddings {
 public:
  WordEmbeddings() = default;
  WordEmbeddings(Vocabulary vocab, Tensor matrix);  // matrix: [vocab, dim]

  int64_t dim() const { return matrix_.rank() == 2 ? matrix_.dim(1) : 0; }
  const Vocabulary& vocab() const { return vocab_; }
  const Tensor& matrix() const { return matrix_; }
  std::span<const double> vector(int32_t id) const;

  // Mean of the in-vocabulary token vectors; all-OOV input gives the zero
  // vector.
  Tensor sentence_embedding(const std::vector<std::string>& tokens) const;

  // KBRF container (entry "embeddings") plus "<path>.vocab.json" sidecar.
  void save(const std::string& path) const;
  static WordEmbeddings load(const std::string& path);

 private:
  Vocabulary vocab_;
  Tensor matrix_;
};

// Skip-gram with negative sampling; deterministic given the seed. Throws
// DataError on an empty corpus.
WordEmbeddings train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                              const SkipgramConfig& cfg, SkipgramStats* stats = nullptr);

struct RetrievalResult {
  std::vector<int64_t> ids;     // descending score, ties by ascending fact id
  std::vector<double> scores;
  int64_t k = 0;                // requested count
};

// Scores every fact by cosine between averaged embeddings of its tokens and
// the expression tokens, sorts descending with ascending-id tie-break, and
// keeps at most k.
RetrievalResult retrieve_topk(const WordEmbeddings& emb,
                              const std::vector<std::string>& expression_tokens,
                              const std::vector<Fact>& facts, int64_t k);

}  // namespace kbref
