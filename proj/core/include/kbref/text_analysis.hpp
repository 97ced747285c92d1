#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbref/fact.hpp"

namespace kbref {

// Lowercases and splits on whitespace/punctuation; the punctuation itself is
// dropped. Tokens are maximal runs of alphanumeric characters (bytes >= 0x80
// are kept so multi-byte UTF-8 sequences stay intact).
std::vector<std::string> tokenize(const std::string& text);

// Token <-> dense index map with two reserved entries: PAD=0 and UNK=1.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;

  Vocabulary();

  // Returns the existing id when the token is already present.
  int32_t add(const std::string& token);
  // kUnk for tokens that were never added.
  int32_t lookup(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int32_t id) const;
  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  // Index -> token, reserved entries included.
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Insertion order follows first occurrence in the corpus.
  static Vocabulary from_corpus(const std::vector<std::vector<std::string>>& docs);

 private:
  std::unordered_map<std::string, int32_t> index_;
  std::vector<std::string> tokens_;
};

// Sparse token-weight vector. Ordered map keeps iteration deterministic.
using SparseVec = std::map<std::string, double>;

// Document-frequency model. weight(t) = tf(t) * ln(N / df(t)); tokens unseen
// during fit get idf 0 (df treated as N), so they contribute nothing.
class TfIdfModel {
 public:
  static TfIdfModel fit(const std::vector<std::vector<std::string>>& docs);

  int64_t corpus_size() const { return n_docs_; }
  int64_t df(const std::string& token) const;
  double idf(const std::string& token) const;
  SparseVec vector(const std::vector<std::string>& tokens) const;

 private:
  std::map<std::string, int64_t> df_;
  int64_t n_docs_ = 0;
};

// Standard cosine of two sparse vectors; 0 when either has zero norm.
double cosine(const SparseVec& u, const SparseVec& v);

// Greedy near-duplicate filter. Facts are scanned in ascending id order and
// a fact is dropped iff its cosine with an already-kept fact is strictly
// greater than `threshold`. Output preserves the input order of the kept
// facts. The two-argument form fits the TF-IDF model on the input facts;
// with an explicit model the pass is idempotent (re-fitting on the reduced
// set shifts df counts, which can surface new near-duplicates).
std::vector<Fact> dedup_facts(const std::vector<Fact>& facts, double threshold = 0.5);
std::vector<Fact> dedup_facts(const std::vector<Fact>& facts, const TfIdfModel& model,
                              double threshold = 0.5);

// Ids whose adoption count has reached the cap (count >= cap) are blocked
// from further use.
std::set<int64_t> frequency_cap(const std::map<int64_t, int64_t>& usage, int64_t cap = 200);

}  // namespace kbref
