#include "kbref/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "kbref/errors.hpp"

namespace kbref {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::NoImage: return "no_image";
    case Mode::NoFacts: return "no_facts";
    case Mode::PartialExpression: return "partial_expression";
  }
  return "full";
}

Mode mode_from_string(const std::string& s) {
  if (s == "full") return Mode::Full;
  if (s == "no_image") return Mode::NoImage;
  if (s == "no_facts") return Mode::NoFacts;
  if (s == "partial_expression") return Mode::PartialExpression;
  throw UsageError("unknown mode '" + s + "' (full|no_image|no_facts|partial_expression)");
}

std::string to_string(FactAttentionKind k) {
  return k == FactAttentionKind::Emm ? "emm" : "soft";
}

FactAttentionKind fact_attention_from_string(const std::string& s) {
  if (s == "emm") return FactAttentionKind::Emm;
  if (s == "soft") return FactAttentionKind::Soft;
  throw UsageError("unknown fact_attention '" + s + "' (emm|soft)");
}

std::string to_string(MemoryInit m) {
  return m == MemoryInit::Expression ? "expression" : "zero";
}

MemoryInit memory_init_from_string(const std::string& s) {
  if (s == "expression") return MemoryInit::Expression;
  if (s == "zero") return MemoryInit::Zero;
  throw UsageError("unknown memory_init '" + s + "' (expression|zero)");
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.dq = 32;
  c.channels = 16;
  c.grid = 3;
  c.app_dim = 16;
  c.attn_hidden = 16;
  c.emm_hidden = 16;
  c.app_fc = 16;
  c.geo_fc = 8;
  c.k = 4;
  c.passes = 2;
  return c;
}

namespace {

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected boolean, got '" + value + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dq") model.dq = parse_int(key, value);
  else if (key == "channels") model.channels = parse_int(key, value);
  else if (key == "grid") model.grid = parse_int(key, value);
  else if (key == "app_dim") model.app_dim = parse_int(key, value);
  else if (key == "attn_hidden") model.attn_hidden = parse_int(key, value);
  else if (key == "emm_hidden") model.emm_hidden = parse_int(key, value);
  else if (key == "app_fc") model.app_fc = parse_int(key, value);
  else if (key == "geo_fc") model.geo_fc = parse_int(key, value);
  else if (key == "k") model.k = parse_int(key, value);
  else if (key == "passes") model.passes = parse_int(key, value);
  else if (key == "fact_attention") model.fact_attention = fact_attention_from_string(value);
  else if (key == "memory_init") model.memory_init = memory_init_from_string(value);
  else if (key == "mode") model.mode = mode_from_string(value);
  else if (key == "lr") train.lr = parse_double(key, value);
  else if (key == "batch") train.batch = parse_int(key, value);
  else if (key == "epochs") train.epochs = parse_int(key, value);
  else if (key == "momentum") train.momentum = parse_double(key, value);
  else if (key == "weight_decay") train.weight_decay = parse_double(key, value);
  else if (key == "fact_supervision") train.fact_supervision = parse_bool(key, value);
  else if (key == "lambda_fact") train.lambda_fact = parse_double(key, value);
  else if (key == "seed") train.seed = static_cast<uint64_t>(parse_int(key, value));
  else if (key == "threads") train.threads = static_cast<int>(parse_int(key, value));
  else if (key == "deterministic") train.deterministic = parse_bool(key, value);
  else if (key == "emb_dim") embedding.dim = parse_int(key, value);
  else if (key == "emb_window") embedding.window = parse_int(key, value);
  else if (key == "emb_negatives") embedding.negatives = parse_int(key, value);
  else if (key == "emb_epochs") embedding.epochs = parse_int(key, value);
  else if (key == "emb_lr") embedding.lr = parse_double(key, value);
  else if (key == "train_samples") train_samples = value;
  else if (key == "val_samples") val_samples = value;
  else if (key == "samples") samples = value;
  else if (key == "features") features = value;
  else if (key == "store") store = value;
  else if (key == "embeddings") embeddings = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "out") out = value;
  else throw UsageError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.merge_file(path);
  return cfg;
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("dq", std::to_string(model.dq));
  kv.emplace_back("channels", std::to_string(model.channels));
  kv.emplace_back("grid", std::to_string(model.grid));
  kv.emplace_back("app_dim", std::to_string(model.app_dim));
  kv.emplace_back("attn_hidden", std::to_string(model.attn_hidden));
  kv.emplace_back("emm_hidden", std::to_string(model.emm_hidden));
  kv.emplace_back("app_fc", std::to_string(model.app_fc));
  kv.emplace_back("geo_fc", std::to_string(model.geo_fc));
  kv.emplace_back("k", std::to_string(model.k));
  kv.emplace_back("passes", std::to_string(model.passes));
  kv.emplace_back("fact_attention", to_string(model.fact_attention));
  kv.emplace_back("memory_init", to_string(model.memory_init));
  kv.emplace_back("mode", to_string(model.mode));
  kv.emplace_back("lr", fmt_double(train.lr));
  kv.emplace_back("batch", std::to_string(train.batch));
  kv.emplace_back("epochs", std::to_string(train.epochs));
  kv.emplace_back("momentum", fmt_double(train.momentum));
  kv.emplace_back("weight_decay", fmt_double(train.weight_decay));
  kv.emplace_back("fact_supervision", train.fact_supervision ? "true" : "false");
  kv.emplace_back("lambda_fact", fmt_double(train.lambda_fact));
  kv.emplace_back("seed", std::to_string(train.seed));
  kv.emplace_back("threads", std::to_string(train.threads));
  kv.emplace_back("deterministic", train.deterministic ? "true" : "false");
  kv.emplace_back("emb_dim", std::to_string(embedding.dim));
  kv.emplace_back("emb_window", std::to_string(embedding.window));
  kv.emplace_back("emb_negatives", std::to_string(embedding.negatives));
  kv.emplace_back("emb_epochs", std::to_string(embedding.epochs));
  kv.emplace_back("emb_lr", fmt_double(embedding.lr));
  auto path_kv = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.emplace_back(key, v);
  };
  path_kv("train_samples", train_samples);
  path_kv("val_samples", val_samples);
  path_kv("samples", samples);
  path_kv("features", features);
  path_kv("store", store);
  path_kv("embeddings", embeddings);
  path_kv("checkpoint", checkpoint);
  path_kv("out", out);
  return kv;
}

}  // namespace kbref
