// kbref — knowledge-grounded referring expression pipeline.
//
// Subcommands: ingest, dedup, embed, retrieve, train, eval, stats, gradcheck.
// Structured output (JSON) goes to stdout or --out files; logs go to stderr.
// Exit codes: 0 success, 1 usage error, 2 data/numeric error.

#include <chrono>
#include <thread>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kbref/checkpoint.hpp"
#include "kbref/config.hpp"
#include "kbref/dataset.hpp"
#include "kbref/embeddings.hpp"
#include "kbref/errors.hpp"
#include "kbref/evaluation.hpp"
#include "kbref/fact_store.hpp"
#include "kbref/gradcheck.hpp"
#include "kbref/model.hpp"
#include "kbref/rng.hpp"
#include "kbref/stats.hpp"
#include "kbref/text_analysis.hpp"
#include "kbref/training.hpp"

namespace {

using kbref::RunConfig;
using nlohmann::json;

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.echo()) j[k] = v;
  return j;
}

// Every file artifact gets a provenance sidecar with the effective config.
void write_meta(const std::string& artifact_path, const RunConfig& cfg) {
  std::ofstream out(artifact_path + ".meta.json", std::ios::binary);
  if (!out) throw kbref::DataError("cannot write '" + artifact_path + ".meta.json'");
  out << json{{"config", config_json(cfg)}}.dump(2) << "\n";
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kbref::DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kbref::DataError("cannot open '" + path + "'");
  return in;
}

kbref::Vocabulary build_vocab(const kbref::FactStore& store,
                              const std::vector<kbref::Sample>& samples) {
  kbref::Vocabulary v;
  for (const auto& s : samples) {
    for (const auto& tok : s.tokens) v.add(tok);
  }
  for (const auto& [_, f] : store.facts()) {
    for (const auto& tok : f.tokens) v.add(tok);
  }
  return v;
}

struct CommonFlags {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Config file first, then flag overrides (flags win).
RunConfig resolve_config(const CommonFlags& common) {
  RunConfig cfg;
  if (!common.config_file.empty()) cfg.merge_file(common.config_file);
  for (const auto& [k, v] : common.overrides) cfg.set(k, v);
  return cfg;
}

// Registers an override-style option that lands in the RunConfig key space.
void add_override(CLI::App* cmd, CommonFlags& common, const std::string& flag,
                  const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&common, key](const std::string& value) { common.overrides.emplace_back(key, value); },
      help);
}

int cmd_ingest(const std::vector<std::string>& triplets, const std::vector<std::string>& articles,
               const RunConfig& cfg) {
  if (cfg.out.empty()) throw kbref::UsageError("ingest: --out is required");
  kbref::FactStore store;
  for (const auto& path : triplets) {
    auto in = open_input(path);
    store.ingest_triplets(in, path);
  }
  for (const auto& path : articles) {
    auto in = open_input(path);
    store.ingest_articles(in, path);
  }
  store.save_jsonl_file(cfg.out);
  write_meta(cfg.out, cfg);
  std::cerr << "ingested " << store.size() << " facts into " << cfg.out << "\n";
  return 0;
}

int cmd_dedup(double threshold, const RunConfig& cfg) {
  if (cfg.store.empty() || cfg.out.empty()) {
    throw kbref::UsageError("dedup: --store and --out are required");
  }
  kbref::FactStore store = kbref::FactStore::load_jsonl_file(cfg.store);
  std::vector<kbref::Fact> facts;
  for (const auto& [_, f] : store.facts()) facts.push_back(f);
  std::vector<kbref::Fact> kept = kbref::dedup_facts(facts, threshold);
  kbref::FactStore::from_facts(kept).save_jsonl_file(cfg.out);
  write_meta(cfg.out, cfg);
  std::cerr << "kept " << kept.size() << " of " << facts.size() << " facts\n";
  return 0;
}

int cmd_embed(const RunConfig& cfg) {
  if (cfg.store.empty() || cfg.out.empty()) {
    throw kbref::UsageError("embed: --store and --out are required");
  }
  kbref::FactStore store = kbref::FactStore::load_jsonl_file(cfg.store);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& [_, f] : store.facts()) corpus.push_back(f.tokens);
  kbref::SkipgramConfig scfg;
  scfg.dim = cfg.embedding.dim;
  scfg.window = cfg.embedding.window;
  scfg.negatives = cfg.embedding.negatives;
  scfg.epochs = cfg.embedding.epochs;
  scfg.lr = cfg.embedding.lr;
  scfg.seed = cfg.train.seed;
  kbref::SkipgramStats stats;
  kbref::WordEmbeddings emb = kbref::train_skipgram(corpus, scfg, &stats);
  emb.save(cfg.out);
  write_meta(cfg.out, cfg);
  for (size_t e = 0; e < stats.epoch_loss.size(); ++e) {
    std::cerr << "epoch " << e << " ns_loss " << stats.epoch_loss[e] << "\n";
  }
  return 0;
}

int cmd_retrieve(const std::string& expression, const std::string& category,
                 const RunConfig& cfg) {
  if (cfg.store.empty() || cfg.embeddings.empty()) {
    throw kbref::UsageError("retrieve: --store and --embeddings are required");
  }
  kbref::FactStore store = kbref::FactStore::load_jsonl_file(cfg.store);
  kbref::WordEmbeddings emb = kbref::WordEmbeddings::load(cfg.embeddings);
  auto facts = store.facts_for_category(kbref::normalize_category(category));
  kbref::RetrievalResult rr =
      kbref::retrieve_topk(emb, kbref::tokenize(expression), facts, cfg.model.k);
  json results = json::array();
  for (size_t i = 0; i < rr.ids.size(); ++i) {
    results.push_back(json{{"id", rr.ids[i]},
                           {"score", rr.scores[i]},
                           {"text", store.fact(rr.ids[i]).text}});
  }
  std::cout << results.dump(2) << "\n";
  if (!cfg.out.empty()) {
    write_json_file(cfg.out, json{{"config", config_json(cfg)}, {"results", results}});
  }
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.train_samples.empty() || cfg.out.empty()) {
    throw kbref::UsageError("train: --train and --out are required");
  }
  auto train_set = kbref::load_samples_file(cfg.train_samples);
  std::vector<kbref::Sample> val_set;
  if (!cfg.val_samples.empty()) val_set = kbref::load_samples_file(cfg.val_samples);

  kbref::FactStore store;
  kbref::WordEmbeddings emb;
  kbref::RetrievalContext ctx;
  const bool needs_facts = cfg.model.mode != kbref::Mode::NoFacts;
  if (needs_facts) {
    if (cfg.store.empty() || cfg.embeddings.empty()) {
      throw kbref::UsageError("train: --store and --embeddings are required outside no_facts");
    }
    store = kbref::FactStore::load_jsonl_file(cfg.store);
    emb = kbref::WordEmbeddings::load(cfg.embeddings);
    ctx = kbref::RetrievalContext{&store, &emb};
  }
  kbref::FeaturePack features;
  const bool needs_features = cfg.model.mode != kbref::Mode::NoImage;
  if (needs_features) {
    if (cfg.features.empty()) {
      throw kbref::UsageError("train: --features is required outside no_image");
    }
    features = kbref::FeaturePack::load(cfg.features);
  }

  kbref::GroundingModel model(cfg.model, build_vocab(store, train_set), cfg.train.seed);
  std::cerr << "training on " << train_set.size() << " samples, " << model.params().total_size()
            << " parameters\n";
  kbref::TrainResult result =
      kbref::train(model, train_set, val_set, needs_features ? &features : nullptr,
                   needs_facts ? &ctx : nullptr, cfg.train, cfg.out, cfg.echo(), &std::cerr);

  json curves = json::array();
  for (const auto& e : result.curves) {
    curves.push_back(json{{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", e.val_loss},
                          {"lr", e.lr}});
  }
  write_json_file(cfg.out + ".curves.json",
                  json{{"config", config_json(cfg)},
                       {"curves", curves},
                       {"best_epoch", result.best_epoch},
                       {"best_val_loss", result.best_val_loss}});
  std::cerr << "best epoch " << result.best_epoch << " val_loss " << result.best_val_loss << "\n";
  return 0;
}

json report_json(const kbref::EvalReport& rep, const RunConfig& cfg) {
  json per_sample = json::array();
  for (const auto& rec : rep.records) {
    json r{{"predicted", rec.predicted}, {"target", rec.target}, {"correct", rec.correct}};
    if (!rec.per_pass_argmax.empty()) r["per_pass_argmax"] = rec.per_pass_argmax;
    if (rec.fg_fact) r["fg_fact"] = *rec.fg_fact;
    per_sample.push_back(std::move(r));
  }
  json j{{"config", config_json(cfg)},
         {"accuracy", rep.accuracy},
         {"total", rep.total},
         {"correct", rep.correct},
         {"gt_survival_rate", rep.gt_survival_rate},
         {"per_sample", std::move(per_sample)}};
  j["fg_accuracy"] = rep.fg_accuracy ? json(*rep.fg_accuracy) : json();
  j["fg_accuracy_conditioned"] =
      rep.fg_accuracy_conditioned ? json(*rep.fg_accuracy_conditioned) : json();
  return j;
}

int cmd_eval(bool mode_overridden, const RunConfig& cfg) {
  if (cfg.checkpoint.empty() || cfg.samples.empty()) {
    throw kbref::UsageError("eval: --checkpoint and --samples are required");
  }
  kbref::GroundingModel model = kbref::load_checkpoint(cfg.checkpoint);
  kbref::ModelConfig mc = model.config();
  if (mode_overridden && cfg.model.mode != mc.mode) {
    // Rebuild with the requested ablation mode; weights carry over.
    mc.mode = cfg.model.mode;
    kbref::GroundingModel remodeled(mc, model.vocab(), 0);
    for (kbref::ParamTensor* p : remodeled.params().all()) {
      p->value = model.params().get(p->name).value;
    }
    model = std::move(remodeled);
  }

  auto samples = kbref::load_samples_file(cfg.samples);
  kbref::FactStore store;
  kbref::WordEmbeddings emb;
  kbref::RetrievalContext ctx;
  const bool needs_facts = model.config().mode != kbref::Mode::NoFacts;
  if (needs_facts) {
    if (cfg.store.empty() || cfg.embeddings.empty()) {
      throw kbref::UsageError("eval: --store and --embeddings are required outside no_facts");
    }
    store = kbref::FactStore::load_jsonl_file(cfg.store);
    emb = kbref::WordEmbeddings::load(cfg.embeddings);
    ctx = kbref::RetrievalContext{&store, &emb};
  }
  kbref::FeaturePack features;
  const bool needs_features = model.config().mode != kbref::Mode::NoImage;
  if (needs_features) {
    if (cfg.features.empty()) throw kbref::UsageError("eval: --features is required");
    features = kbref::FeaturePack::load(cfg.features);
  }

  kbref::Scorer scorer = kbref::model_scorer(model, needs_features ? &features : nullptr,
                                             needs_facts ? &ctx : nullptr);
  kbref::EvalReport rep = kbref::evaluate(scorer, samples, cfg.train.threads);
  json j = report_json(rep, cfg);
  if (cfg.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json_file(cfg.out, j);
    std::cerr << "accuracy " << rep.accuracy << " over " << rep.total << " samples\n";
  }
  return 0;
}

void write_histogram_csv(const std::string& path, const std::string& header,
                         const std::map<int64_t, int64_t>& counts, double scale = 1.0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kbref::DataError("cannot write '" + path + "'");
  out << header << "\n";
  for (const auto& [bin, count] : counts) {
    out << static_cast<double>(bin) * scale << "," << count << "\n";
  }
}

int cmd_stats(const std::string& csv_dir, const RunConfig& cfg) {
  if (cfg.samples.empty()) throw kbref::UsageError("stats: --samples is required");
  auto samples = kbref::load_samples_file(cfg.samples);
  kbref::FactStore store;
  const bool with_store = !cfg.store.empty();
  if (with_store) store = kbref::FactStore::load_jsonl_file(cfg.store);
  kbref::StatsReport rep = kbref::corpus_stats(samples, with_store ? &store : nullptr);

  auto hist_json = [](const std::map<int64_t, int64_t>& counts) {
    json j = json::object();
    for (const auto& [bin, count] : counts) j[std::to_string(bin)] = count;
    return j;
  };
  json j{{"config", config_json(cfg)},
         {"n_expressions", rep.n_expressions},
         {"mean_expression_length", rep.mean_expression_length},
         {"expression_length_histogram", hist_json(rep.expression_length)},
         {"candidates_per_sample_histogram", hist_json(rep.candidates_per_sample)}};
  if (rep.n_facts) {
    j["n_facts"] = *rep.n_facts;
    j["mean_fact_length"] = rep.mean_fact_length ? json(*rep.mean_fact_length) : json();
    j["fact_length_histogram"] = hist_json(rep.fact_length);
    j["kb_source_percent"] = rep.kb_source_percent;
    j["expression_fact_similarity_histogram"] = json{
        {"bin_width", rep.expression_fact_similarity.bin_width},
        {"counts", hist_json(rep.expression_fact_similarity.counts)}};
    if (rep.mean_expression_fact_similarity) {
      j["mean_expression_fact_similarity"] = *rep.mean_expression_fact_similarity;
    }
  }
  if (cfg.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json_file(cfg.out, j);
  }
  if (!csv_dir.empty()) {
    write_histogram_csv(csv_dir + "/expression_length.csv", "length,count",
                        rep.expression_length);
    write_histogram_csv(csv_dir + "/candidates_per_sample.csv", "candidates,count",
                        rep.candidates_per_sample);
    if (rep.n_facts) {
      write_histogram_csv(csv_dir + "/fact_length.csv", "length,count", rep.fact_length);
      write_histogram_csv(csv_dir + "/expression_fact_similarity.csv", "bin_low,count",
                          rep.expression_fact_similarity.counts,
                          rep.expression_fact_similarity.bin_width);
    }
  }
  return 0;
}

// Self-contained fixture at the requested dims: 3 candidates, facts with a
// known groundtruth, random grid/appearance features.
int cmd_gradcheck(const std::string& dims, const RunConfig& cfg) {
  kbref::ModelConfig mc = cfg.model;
  if (dims == "tiny") {
    mc = kbref::tiny_model_config();
  } else if (dims != "config") {
    throw kbref::UsageError("gradcheck: --dims must be 'tiny' or 'config'");
  }
  const uint64_t seed = cfg.train.seed;

  kbref::FactStore store;
  {
    std::istringstream articles(
        R"({"category": "cata", "text": "Amber fruit tastes sweet. It grows east."})"
        "\n"
        R"({"category": "catb", "text": "Basin tools cut wood. They hang west."})"
        "\n"
        R"({"category": "catc", "text": "Cedar boxes hold nails. They smell dry."})"
        "\n");
    store.ingest_articles(articles, "<gradcheck>");
  }
  std::vector<std::vector<std::string>> corpus;
  for (const auto& [_, f] : store.facts()) corpus.push_back(f.tokens);
  kbref::SkipgramConfig scfg;
  scfg.dim = 8;
  scfg.epochs = 2;
  scfg.seed = seed;
  kbref::WordEmbeddings emb = kbref::train_skipgram(corpus, scfg);
  kbref::RetrievalContext ctx{&store, &emb};

  kbref::Sample s;
  s.expression = "something sweet to eat";
  s.tokens = kbref::tokenize(s.expression);
  s.image_id = "img0";
  s.image_width = 100;
  s.image_height = 100;
  s.candidates = {kbref::SampleCandidate{kbref::Box{5, 5, 50, 50}, "cata"},
                  kbref::SampleCandidate{kbref::Box{20, 10, 90, 80}, "catb"},
                  kbref::SampleCandidate{kbref::Box{10, 40, 60, 95}, "catc"}};
  s.target_index = 0;
  for (const auto& f : store.facts_for_category("cata")) {
    if (!s.gt_fact_id) s.gt_fact_id = f.id;
  }

  kbref::Rng rng(kbref::Rng::derive(seed, "gradcheck_features"));
  kbref::FeaturePack features;
  kbref::Tensor grid({mc.grid, mc.grid, mc.channels});
  for (int64_t i = 0; i < grid.size(); ++i) grid[i] = rng.uniform(-1, 1);
  features.set_grid("img0", grid);
  for (int64_t c = 0; c < 3; ++c) {
    kbref::Tensor app({mc.app_dim});
    for (int64_t i = 0; i < app.size(); ++i) app[i] = rng.uniform(-1, 1);
    features.set_appearance("img0", c, app);
  }

  kbref::Vocabulary vocab = build_vocab(store, {s});

  // Coordinates are sharded over worker threads; each worker owns a full
  // model replica (same seed, identical values), so the checks stay pure.
  const int threads = std::max(1, cfg.train.threads);
  auto t0 = std::chrono::steady_clock::now();
  kbref::GroundingModel proto(mc, vocab, seed);
  std::vector<std::vector<std::string>> shards =
      kbref::shard_param_names(proto.params(), threads);
  std::vector<kbref::GradCheckReport> reports(shards.size());
  auto run_shard = [&](size_t si) {
    kbref::GroundingModel model(mc, vocab, seed);
    kbref::Graph graph;
    auto loss_fn = [&](bool with_grad) {
      graph.reset();
      kbref::Var loss =
          model.loss(graph, s, &features, &ctx, /*fact_supervision=*/true, /*lambda=*/1.0);
      if (with_grad) graph.backward(loss);
      return graph.value(loss)[0];
    };
    std::vector<kbref::ParamTensor*> subset;
    for (const std::string& name : shards[si]) subset.push_back(&model.params().get(name));
    reports[si] = kbref::finite_diff_check(loss_fn, subset, 1e-5);
  };
  if (threads == 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> pool;
    for (size_t si = 0; si < shards.size(); ++si) pool.emplace_back(run_shard, si);
    for (auto& t : pool) t.join();
  }
  kbref::GradCheckReport rep = kbref::merge_reports(reports);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  kbref::GroundingModel& model = proto;

  json j{{"config", config_json(cfg)},
         {"dims", dims},
         {"max_rel_error", rep.max_rel_error},
         {"worst_param", rep.worst_param},
         {"worst_index", rep.worst_index},
         {"coords_checked", rep.coords_checked},
         {"parameters", model.params().total_size()},
         {"elapsed_seconds", elapsed},
         {"pass", rep.max_rel_error < 1e-4}};
  std::cout << j.dump(2) << "\n";
  if (!cfg.out.empty()) write_json_file(cfg.out, j);
  std::cerr << "max_rel_error " << rep.max_rel_error << " over " << rep.coords_checked
            << " coordinates in " << elapsed << "s\n";
  return rep.max_rel_error < 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-grounded referring expression pipeline"};
  app.require_subcommand(1);

  CommonFlags common;
  std::vector<std::string> triplet_paths, article_paths;
  std::string expression, category, csv_dir, dims = "tiny";
  double threshold = 0.5;
  bool mode_overridden = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_file, "key=value config file");
    add_override(cmd, common, "--seed", "seed", "master RNG seed");
    add_override(cmd, common, "--threads", "threads", "worker threads for evaluation");
    add_override(cmd, common, "--k", "k", "stage-1 retrieval cap");
    add_override(cmd, common, "--passes", "passes", "memory passes T");
    add_override(cmd, common, "--out", "out", "output artifact path");
    cmd->add_option_function<std::string>(
        "--mode",
        [&](const std::string& value) {
          common.overrides.emplace_back("mode", value);
          mode_overridden = true;
        },
        "full|no_image|no_facts|partial_expression");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "build a fact store from JSONL inputs");
  ingest->add_option("--triplets", triplet_paths, "triplet JSONL file(s)");
  ingest->add_option("--articles", article_paths, "article JSONL file(s)");
  add_common(ingest);

  CLI::App* dedup = app.add_subcommand("dedup", "drop near-duplicate facts");
  dedup->add_option("--threshold", threshold, "cosine threshold (default 0.5)");
  add_override(dedup, common, "--store", "store", "input store JSONL");
  add_common(dedup);

  CLI::App* embed = app.add_subcommand("embed", "train skip-gram embeddings on a store");
  add_override(embed, common, "--store", "store", "input store JSONL");
  add_override(embed, common, "--dim", "emb_dim", "embedding dimension");
  add_override(embed, common, "--window", "emb_window", "context window");
  add_override(embed, common, "--negatives", "emb_negatives", "negative samples");
  add_override(embed, common, "--epochs", "emb_epochs", "training epochs");
  add_common(embed);

  CLI::App* retrieve = app.add_subcommand("retrieve", "top-k facts for an expression");
  retrieve->add_option("--expression", expression, "query expression")->required();
  retrieve->add_option("--category", category, "candidate category")->required();
  add_override(retrieve, common, "--store", "store", "store JSONL");
  add_override(retrieve, common, "--embeddings", "embeddings", "embeddings KBRF");
  add_common(retrieve);

  CLI::App* train_cmd = app.add_subcommand("train", "train the grounding model");
  add_override(train_cmd, common, "--train", "train_samples", "training samples JSONL");
  add_override(train_cmd, common, "--val", "val_samples", "validation samples JSONL");
  add_override(train_cmd, common, "--features", "features", "feature pack KBRF");
  add_override(train_cmd, common, "--store", "store", "store JSONL");
  add_override(train_cmd, common, "--embeddings", "embeddings", "embeddings KBRF");
  add_override(train_cmd, common, "--lr", "lr", "initial learning rate");
  add_override(train_cmd, common, "--batch", "batch", "batch size");
  add_override(train_cmd, common, "--epochs", "epochs", "training epochs");
  add_override(train_cmd, common, "--lambda", "lambda_fact", "fact supervision weight");
  add_override(train_cmd, common, "--fact-supervision", "fact_supervision",
               "enable last-pass fact supervision (true|false)");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_override(eval_cmd, common, "--checkpoint", "checkpoint", "checkpoint KBRF");
  add_override(eval_cmd, common, "--samples", "samples", "samples JSONL");
  add_override(eval_cmd, common, "--features", "features", "feature pack KBRF");
  add_override(eval_cmd, common, "--store", "store", "store JSONL");
  add_override(eval_cmd, common, "--embeddings", "embeddings", "embeddings KBRF");
  add_common(eval_cmd);

  CLI::App* stats = app.add_subcommand("stats", "corpus statistics report");
  add_override(stats, common, "--samples", "samples", "samples JSONL");
  add_override(stats, common, "--store", "store", "store JSONL (optional)");
  stats->add_option("--csv-dir", csv_dir, "directory for histogram CSV files");
  add_common(stats);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--dims", dims, "tiny|config (default tiny)");
  add_common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = resolve_config(common);
    if (ingest->parsed()) return cmd_ingest(triplet_paths, article_paths, cfg);
    if (dedup->parsed()) return cmd_dedup(threshold, cfg);
    if (embed->parsed()) return cmd_embed(cfg);
    if (retrieve->parsed()) return cmd_retrieve(expression, category, cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_eval(mode_overridden, cfg);
    if (stats->parsed()) return cmd_stats(csv_dir, cfg);
    if (gradcheck->parsed()) return cmd_gradcheck(dims, cfg);
    throw kbref::UsageError("no subcommand given");
  } catch (const kbref::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const kbref::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
