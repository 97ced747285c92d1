#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kbref {

enum class Mode { Full, NoImage, NoFacts, PartialExpression };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);  // UsageError on unknown

enum class FactAttentionKind { Emm, Soft };
std::string to_string(FactAttentionKind k);
FactAttentionKind fact_attention_from_string(const std::string& s);

enum class MemoryInit { Expression, Zero };
std::string to_string(MemoryInit m);
MemoryInit memory_init_from_string(const std::string& s);

// Network dimensions and behavior knobs. All widths scale together through
// one config so the same code runs at paper scale and at test scale.
struct ModelConfig {
  int64_t dq = 2048;          // expression / fact / memory feature width
  int64_t channels = 512;     // image grid channels
  int64_t grid = 7;           // grid side length
  int64_t app_dim = 512;      // appearance feature input width
  int64_t attn_hidden = 512;  // image attention scorer width
  int64_t emm_hidden = 512;   // fact attention scorer width
  int64_t app_fc = 512;       // appearance branch FC output width
  int64_t geo_fc = 128;       // geometric branch FC output width
  int64_t k = 50;             // stage-1 retrieval cap
  int64_t passes = 5;         // memory passes T
  FactAttentionKind fact_attention = FactAttentionKind::Emm;
  MemoryInit memory_init = MemoryInit::Expression;
  Mode mode = Mode::Full;
};

// Scaled-down preset used by `gradcheck --dims tiny` and the test fixtures.
ModelConfig tiny_model_config();

struct TrainConfig {
  double lr = 1e-4;
  int64_t batch = 16;
  int64_t epochs = 40;
  double momentum = 0.0;
  double weight_decay = 0.0;
  bool fact_supervision = false;
  double lambda_fact = 1.0;  // weight of the last-pass fact supervision term
  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = true;
};

struct EmbeddingKnobs {
  int64_t dim = 100;
  int64_t window = 5;
  int64_t negatives = 5;
  int64_t epochs = 5;
  double lr = 0.025;
};

// Full knob set: key=value config file with CLI flag overrides (flags win).
// Unknown keys are rejected. The effective config is echoed into every
// output artifact for provenance.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  EmbeddingKnobs embedding;

  // paths
  std::string train_samples;
  std::string val_samples;
  std::string samples;
  std::string features;
  std::string store;
  std::string embeddings;
  std::string checkpoint;
  std::string out;

  void set(const std::string& key, const std::string& value);  // UsageError on unknown key
  static RunConfig from_file(const std::string& path);
  void merge_file(const std::string& path);

  // Ordered key -> value rendering of every knob, for provenance echoes.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

}  // namespace kbref
