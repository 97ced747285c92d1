#include "kbref/text_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "kbref/errors.hpp"

namespace kbref {

namespace {

bool is_token_char(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_token_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>"};
  index_["<pad>"] = kPad;
  index_["<unk>"] = kUnk;
}

int32_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int32_t Vocabulary::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) throw DataError("vocabulary id out of range");
  return tokens_[static_cast<size_t>(id)];
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::vector<std::string>>& docs) {
  Vocabulary v;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) v.add(tok);
  }
  return v;
}

TfIdfModel TfIdfModel::fit(const std::vector<std::vector<std::string>>& docs) {
  TfIdfModel m;
  m.n_docs_ = static_cast<int64_t>(docs.size());
  for (const auto& doc : docs) {
    std::set<std::string> seen(doc.begin(), doc.end());
    for (const auto& tok : seen) m.df_[tok] += 1;
  }
  return m;
}

int64_t TfIdfModel::df(const std::string& token) const {
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

double TfIdfModel::idf(const std::string& token) const {
  int64_t d = df(token);
  if (d == 0) return 0.0;  // unseen: df treated as N
  return std::log(static_cast<double>(n_docs_) / static_cast<double>(d));
}

SparseVec TfIdfModel::vector(const std::vector<std::string>& tokens) const {
  std::map<std::string, int64_t> tf;
  for (const auto& tok : tokens) tf[tok] += 1;
  SparseVec out;
  for (const auto& [tok, count] : tf) {
    double w = static_cast<double>(count) * idf(tok);
    if (w != 0.0) out[tok] = w;
  }
  return out;
}

double cosine(const SparseVec& u, const SparseVec& v) {
  double nu = 0.0, nv = 0.0;
  for (const auto& [_, w] : u) nu += w * w;
  for (const auto& [_, w] : v) nv += w * w;
  if (nu == 0.0 || nv == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [tok, w] : u) {
    auto it = v.find(tok);
    if (it != v.end()) dot += w * it->second;
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<Fact> dedup_facts(const std::vector<Fact>& facts, double threshold) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(facts.size());
  for (const auto& f : facts) docs.push_back(f.tokens);
  return dedup_facts(facts, TfIdfModel::fit(docs), threshold);
}

std::vector<Fact> dedup_facts(const std::vector<Fact>& facts, const TfIdfModel& model,
                              double threshold) {
  // Scan in ascending id order; output keeps the input order.
  std::vector<size_t> order(facts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return facts[a].id < facts[b].id; });

  std::vector<SparseVec> kept_vecs;
  std::vector<bool> keep(facts.size(), false);
  for (size_t idx : order) {
    SparseVec vec = model.vector(facts[idx].tokens);
    bool duplicate = false;
    for (const auto& kv : kept_vecs) {
      if (cosine(vec, kv) > threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      keep[idx] = true;
      kept_vecs.push_back(std::move(vec));
    }
  }

  std::vector<Fact> out;
  for (size_t i = 0; i < facts.size(); ++i) {
    if (keep[i]) out.push_back(facts[i]);
  }
  return out;
}

std::set<int64_t> frequency_cap(const std::map<int64_t, int64_t>& usage, int64_t cap) {
  std::set<int64_t> blocked;
  for (const auto& [id, count] : usage) {
    if (count >= cap) blocked.insert(id);
  }
  return blocked;
}

}  // namespace kbref
