#include "kbref/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kbref/errors.hpp"
#include "kbref/rng.hpp"
#include "kbref/tensor_file.hpp"

namespace kbref {

using nlohmann::json;

WordEmbeddings::WordEmbeddings(Vocabulary vocab, Tensor matrix)
    : vocab_(std::move(vocab)), matrix_(std::move(matrix)) {
  if (matrix_.rank() != 2 || matrix_.dim(0) != vocab_.size()) {
    throw ShapeError("embedding matrix shape does not match vocabulary");
  }
}

std::span<const double> WordEmbeddings::vector(int32_t id) const {
  if (id < 0 || id >= vocab_.size()) throw DataError("embedding id out of range");
  return {matrix_.data() + static_cast<int64_t>(id) * dim(), static_cast<size_t>(dim())};
}

Tensor WordEmbeddings::sentence_embedding(const std::vector<std::string>& tokens) const {
  Tensor out({dim()});
  int64_t used = 0;
  for (const auto& tok : tokens) {
    if (!vocab_.contains(tok)) continue;
    int32_t id = vocab_.lookup(tok);
    if (id == Vocabulary::kUnk || id == Vocabulary::kPad) continue;
    std::span<const double> v = vector(id);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += v[static_cast<size_t>(i)];
    ++used;
  }
  if (used > 0) {
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(used);
  }
  return out;
}

void WordEmbeddings::save(const std::string& path) const {
  TensorContainer c;
  c.put("embeddings", matrix_);
  c.write_file(path);
  json sidecar{{"dim", dim()}, {"tokens", vocab_.tokens()}};
  std::ofstream out(path + ".vocab.json", std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + ".vocab.json' for writing");
  out << sidecar.dump(2) << "\n";
}

WordEmbeddings WordEmbeddings::load(const std::string& path) {
  TensorContainer c = TensorContainer::read_file(path);
  Tensor matrix = c.get("embeddings");
  std::ifstream in(path + ".vocab.json", std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + ".vocab.json'");
  json sidecar;
  try {
    in >> sidecar;
  } catch (const json::exception& e) {
    throw DataError(path + ".vocab.json: " + e.what());
  }
  auto tokens = sidecar.at("tokens").get<std::vector<std::string>>();
  Vocabulary vocab;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i < 2) continue;  // reserved entries are implicit
    vocab.add(tokens[i]);
  }
  return WordEmbeddings(std::move(vocab), std::move(matrix));
}

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Unigram^0.75 sampling distribution over vocabulary ids, cumulative form.
struct NegativeTable {
  std::vector<int32_t> ids;
  std::vector<double> cumulative;
  double total = 0.0;

  int32_t sample(Rng& rng) const {
    double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    size_t idx = std::min(static_cast<size_t>(it - cumulative.begin()), ids.size() - 1);
    return ids[idx];
  }
};

}  // namespace

WordEmbeddings train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                              const SkipgramConfig& cfg, SkipgramStats* stats) {
  int64_t total_tokens = 0;
  for (const auto& doc : corpus) total_tokens += static_cast<int64_t>(doc.size());
  if (corpus.empty() || total_tokens == 0) throw DataError("train_skipgram: empty corpus");
  if (cfg.dim <= 0) throw UsageError("train_skipgram: dim must be positive");

  Vocabulary vocab = Vocabulary::from_corpus(corpus);
  int64_t v = vocab.size();
  std::vector<int64_t> counts(static_cast<size_t>(v), 0);
  std::vector<std::vector<int32_t>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& doc : corpus) {
    std::vector<int32_t> ids;
    ids.reserve(doc.size());
    for (const auto& tok : doc) {
      int32_t id = vocab.lookup(tok);
      ids.push_back(id);
      counts[static_cast<size_t>(id)] += 1;
    }
    sentences.push_back(std::move(ids));
  }

  NegativeTable table;
  for (int32_t id = 2; id < v; ++id) {  // reserved entries never sampled
    int64_t c = counts[static_cast<size_t>(id)];
    if (c == 0) continue;
    table.total += std::pow(static_cast<double>(c), 0.75);
    table.ids.push_back(id);
    table.cumulative.push_back(table.total);
  }

  Rng rng(Rng::derive(cfg.seed, "skipgram"));
  Tensor in({v, cfg.dim});
  Tensor out({v, cfg.dim});
  double r = 0.5 / static_cast<double>(cfg.dim);
  for (int64_t i = 0; i < in.size(); ++i) in[i] = rng.uniform(-r, r);

  const int64_t d = cfg.dim;
  const int64_t planned_updates = std::max<int64_t>(1, cfg.epochs * total_tokens);
  int64_t processed = 0;
  std::vector<double> grad_center(static_cast<size_t>(d));

  if (stats) stats->epoch_loss.clear();
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    int64_t epoch_pairs = 0;
    for (const auto& sent : sentences) {
      int64_t len = static_cast<int64_t>(sent.size());
      for (int64_t pos = 0; pos < len; ++pos) {
        double alpha =
            std::max(cfg.lr_min,
                     cfg.lr * (1.0 - static_cast<double>(processed) /
                                         static_cast<double>(planned_updates + 1)));
        ++processed;
        int32_t center = sent[static_cast<size_t>(pos)];
        int64_t radius = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(cfg.window)));
        for (int64_t off = -radius; off <= radius; ++off) {
          if (off == 0) continue;
          int64_t cpos = pos + off;
          if (cpos < 0 || cpos >= len) continue;
          int32_t context = sent[static_cast<size_t>(cpos)];

          double* vc = in.data() + static_cast<int64_t>(center) * d;
          std::fill(grad_center.begin(), grad_center.end(), 0.0);
          double pair_loss = 0.0;

          // Positive example plus negative samples; label 1 for the true
          // context, 0 for the sampled ones.
          for (int64_t ns = 0; ns <= cfg.negatives; ++ns) {
            int32_t target;
            double label;
            if (ns == 0) {
              target = context;
              label = 1.0;
            } else {
              if (table.ids.empty()) break;
              target = table.sample(rng);
              if (target == context) continue;
              label = 0.0;
            }
            double* vo = out.data() + static_cast<int64_t>(target) * d;
            double score = 0.0;
            for (int64_t i = 0; i < d; ++i) score += vc[i] * vo[i];
            double p = sigmoid(score);
            pair_loss += label > 0.5 ? -std::log(std::max(p, 1e-12))
                                     : -std::log(std::max(1.0 - p, 1e-12));
            double g = (p - label) * alpha;
            for (int64_t i = 0; i < d; ++i) {
              grad_center[static_cast<size_t>(i)] += g * vo[i];
              vo[i] -= g * vc[i];
            }
          }
          for (int64_t i = 0; i < d; ++i) vc[i] -= grad_center[static_cast<size_t>(i)];
          epoch_loss += pair_loss;
          ++epoch_pairs;
        }
      }
    }
    if (stats) {
      stats->epoch_loss.push_back(epoch_pairs > 0 ? epoch_loss / static_cast<double>(epoch_pairs)
                                                  : 0.0);
    }
  }
  if (!in.all_finite()) throw NumericError("train_skipgram: embeddings went non-finite");
  return WordEmbeddings(std::move(vocab), std::move(in));
}

namespace {

double dense_cosine(const Tensor& a, const Tensor& b) {
  double na = 0.0, nb = 0.0, dot = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    dot += a[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

RetrievalResult retrieve_topk(const WordEmbeddings& emb,
                              const std::vector<std::string>& expression_tokens,
                              const std::vector<Fact>& facts, int64_t k) {
  if (k < 1) throw UsageError("retrieve_topk: k must be >= 1");
  RetrievalResult result;
  result.k = k;
  Tensor query = emb.sentence_embedding(expression_tokens);

  std::vector<std::pair<double, int64_t>> scored;
  scored.reserve(facts.size());
  for (const Fact& f : facts) {
    scored.emplace_back(dense_cosine(query, emb.sentence_embedding(f.tokens)), f.id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  int64_t take = std::min<int64_t>(k, static_cast<int64_t>(scored.size()));
  for (int64_t i = 0; i < take; ++i) {
    result.scores.push_back(scored[static_cast<size_t>(i)].first);
    result.ids.push_back(scored[static_cast<size_t>(i)].second);
  }
  return result;
}

}  // namespace kbref
