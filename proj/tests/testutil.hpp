#pragma once

// Shared fixtures for the unit and acceptance suites: synthetic fact stores,
// seeded feature packs, and small grounding tasks with controllable signal
// (fact-only, image-only, mixed, conjunction).

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "kbref/config.hpp"
#include "kbref/dataset.hpp"
#include "kbref/embeddings.hpp"
#include "kbref/fact_store.hpp"
#include "kbref/model.hpp"
#include "kbref/rng.hpp"
#include "kbref/text_analysis.hpp"

namespace kbref::testutil {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("kbref_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::vector<std::string> word_pool() {
  return {"amber", "basin", "cedar", "delta", "ember", "fjord", "grove", "heron",
          "islet", "joule", "knoll", "lumen", "maple", "nadir", "ocher", "prism",
          "quill", "ridge", "sepal", "tulip", "umber", "vapor", "wharf", "xenon",
          "yucca", "zephyr"};
}

// Random facts over a small vocabulary; ids are 0..n-1.
inline std::vector<Fact> synthetic_facts(int64_t n, uint64_t seed, int64_t vocab = 40,
                                         int64_t min_len = 3, int64_t max_len = 8) {
  Rng rng(Rng::derive(seed, "synthetic_facts"));
  std::vector<Fact> out;
  for (int64_t i = 0; i < n; ++i) {
    Fact f;
    f.id = i;
    f.source = FactSource::Other;
    f.category = "cat" + std::to_string(rng.below(5));
    f.categories = {f.category};
    int64_t len = min_len + static_cast<int64_t>(rng.below(static_cast<uint64_t>(max_len - min_len + 1)));
    std::string text;
    for (int64_t t = 0; t < len; ++t) {
      if (t) text += " ";
      text += "w" + std::to_string(rng.below(static_cast<uint64_t>(vocab)));
    }
    f.text = text;
    f.tokens = tokenize(text);
    out.push_back(std::move(f));
  }
  return out;
}

enum class Signal { Fact, Image, Mixed, Conjunction };

struct GroundingFixture {
  ModelConfig config;
  FactStore store;
  WordEmbeddings embeddings;
  FeaturePack features;
  std::vector<Sample> samples;
  Vocabulary vocab;  // over store facts + sample expressions

  RetrievalContext retrieval() const { return RetrievalContext{&store, &embeddings}; }
};

inline ModelConfig fixture_model_config() {
  ModelConfig c = tiny_model_config();
  c.dq = 24;
  c.channels = 8;
  c.grid = 2;
  c.app_dim = 8;
  c.attn_hidden = 12;
  c.emm_hidden = 12;
  c.app_fc = 12;
  c.geo_fc = 6;
  c.k = 4;
  c.passes = 2;
  return c;
}

inline Vocabulary fixture_vocab(const FactStore& store, const std::vector<Sample>& samples) {
  Vocabulary v;
  for (const Sample& s : samples) {
    for (const auto& tok : s.tokens) v.add(tok);
  }
  for (const auto& [_, f] : store.facts()) {
    for (const auto& tok : f.tokens) v.add(tok);
  }
  return v;
}

inline WordEmbeddings fixture_embeddings(const FactStore& store, uint64_t seed) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& [_, f] : store.facts()) corpus.push_back(f.tokens);
  SkipgramConfig cfg;
  cfg.dim = 12;
  cfg.window = 3;
  cfg.negatives = 3;
  cfg.epochs = 2;
  cfg.seed = seed;
  return train_skipgram(corpus, cfg);
}

inline Tensor pattern_tensor(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = (i % 2 == 0 ? value : -value);
  return t;
}

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double radius = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-radius, radius);
  return t;
}

// Builds `n` two-candidate samples. Fact samples are decidable only through
// the retrieved facts (identical boxes and appearance), image samples only
// through appearance (identical fact sets), and conjunction samples require
// noticing that the target's two facts share a bridge token.
inline GroundingFixture make_grounding_fixture(Signal signal, int64_t n, uint64_t seed) {
  GroundingFixture fx;
  fx.config = fixture_model_config();
  Rng rng(Rng::derive(seed, "grounding_fixture"));
  const std::vector<std::string> words = word_pool();
  const int64_t n_pairs = 4;  // category pairs cycled over samples

  // Knowledge base.
  {
    std::ostringstream articles;
    for (int64_t p = 0; p < n_pairs; ++p) {
      const std::string& marker = words[static_cast<size_t>(p)];
      const std::string& other = words[static_cast<size_t>(p + n_pairs)];
      // Fact-signal categories: one marker fact plus one filler fact each.
      articles << R"({"category": "tastecat)" << p << R"(", "text": "This kind tastes like )"
               << marker << R"( fruit. It rests near the water line."})"
               << "\n";
      articles << R"({"category": "toolcat)" << p << R"(", "text": "This kind serves for )"
               << other << R"( work. It rests near the water line."})"
               << "\n";
      // Conjunction categories: the linked pair shares a bridge token, the
      // unlinked pair does not; the query token appears in both sets.
      const std::string bridge = words[static_cast<size_t>(p + 2 * n_pairs)];
      const std::string decoy = words[static_cast<size_t>(p + 3 * n_pairs)];
      const std::string query = words[static_cast<size_t>(p + 4 * n_pairs)];
      articles << R"({"category": "linked)" << p << R"(", "text": "This kind goes with )"
               << bridge << R"( gear. The )" << bridge << R"( gear gives )" << query
               << R"( power."})"
               << "\n";
      articles << R"({"category": "unlinked)" << p << R"(", "text": "This kind goes with )"
               << decoy << R"( gear. The )" << bridge << R"( gear gives )" << query
               << R"( power."})"
               << "\n";
    }
    // Shared category for image-signal samples: identical facts either side.
    articles << R"({"category": "plaincat", "text": "This kind sits in plain view. Nothing else matters here."})"
             << "\n";
    std::istringstream in(articles.str());
    fx.store.ingest_articles(in, "<fixture>");
  }

  fx.embeddings = fixture_embeddings(fx.store, seed);

  auto add_features = [&](const std::string& image_id, const Tensor& app0, const Tensor& app1) {
    fx.features.set_grid(image_id,
                         random_tensor({fx.config.grid, fx.config.grid, fx.config.channels}, rng));
    fx.features.set_appearance(image_id, 0, app0);
    fx.features.set_appearance(image_id, 1, app1);
  };

  for (int64_t i = 0; i < n; ++i) {
    int64_t p = i % n_pairs;
    const std::string& marker = words[static_cast<size_t>(p)];
    Sample s;
    s.image_id = "img" + std::to_string(i);
    s.image_width = 100;
    s.image_height = 100;
    s.target_index = i % 2;

    Signal kind = signal;
    if (signal == Signal::Mixed) kind = (i / 2) % 2 == 0 ? Signal::Fact : Signal::Image;

    Box box{10, 10, 60, 60};
    if (kind == Signal::Fact) {
      s.expression = "something that tastes like " + marker + " fruit";
      SampleCandidate target{box, "tastecat" + std::to_string(p)};
      SampleCandidate distractor{box, "toolcat" + std::to_string(p)};
      // Identical appearance: only the fact sets separate the candidates.
      Tensor app({fx.config.app_dim});
      app.fill(0.5);
      add_features(s.image_id, app, app);
      s.candidates = s.target_index == 0
                         ? std::vector<SampleCandidate>{target, distractor}
                         : std::vector<SampleCandidate>{distractor, target};
      // Annotate the marker fact for fact-grounding metrics.
      for (const Fact& f : fx.store.facts_for_category("tastecat" + std::to_string(p))) {
        if (std::find(f.tokens.begin(), f.tokens.end(), marker) != f.tokens.end()) {
          s.gt_fact_id = f.id;
        }
      }
    } else if (kind == Signal::Image) {
      s.expression = "the marked object over there";
      SampleCandidate target{box, "plaincat"};
      SampleCandidate distractor{box, "plaincat"};
      Tensor app_target = pattern_tensor({fx.config.app_dim}, 1.0);
      Tensor app_other = pattern_tensor({fx.config.app_dim}, -1.0);
      s.candidates = {target, distractor};
      add_features(s.image_id, s.target_index == 0 ? app_target : app_other,
                   s.target_index == 0 ? app_other : app_target);
    } else {  // Conjunction
      const std::string query = words[static_cast<size_t>(p + 4 * n_pairs)];
      s.expression = "the thing which gives " + query + " power";
      SampleCandidate target{box, "linked" + std::to_string(p)};
      SampleCandidate distractor{box, "unlinked" + std::to_string(p)};
      Tensor app({fx.config.app_dim});
      app.fill(0.5);
      add_features(s.image_id, app, app);
      s.candidates = s.target_index == 0
                         ? std::vector<SampleCandidate>{target, distractor}
                         : std::vector<SampleCandidate>{distractor, target};
    }
    s.tokens = tokenize(s.expression);
    fx.samples.push_back(std::move(s));
  }

  fx.vocab = fixture_vocab(fx.store, fx.samples);
  return fx;
}

}  // namespace kbref::testutil
