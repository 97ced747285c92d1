#include "kbref/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "kbref/errors.hpp"
#include "kbref/tensor_file.hpp"

namespace kbref {

using nlohmann::json;

void save_checkpoint(const std::string& path, const GroundingModel& model,
                     const std::vector<std::pair<std::string, std::string>>& config_echo) {
  TensorContainer c;
  for (const ParamTensor* p : model.params().all()) {
    c.put(p->name, p->value);
  }
  c.write_file(path);

  json entries = json::array();
  for (const ContainerEntry& e : c.manifest()) {
    entries.push_back(json{{"name", e.name}, {"shape", e.dims}, {"offset", e.offset}});
  }
  const ModelConfig& mc = model.config();
  json manifest{
      {"format", "kbrf-checkpoint"},
      {"version", 1},
      {"entries", std::move(entries)},
      {"model_config",
       {{"dq", mc.dq},
        {"channels", mc.channels},
        {"grid", mc.grid},
        {"app_dim", mc.app_dim},
        {"attn_hidden", mc.attn_hidden},
        {"emm_hidden", mc.emm_hidden},
        {"app_fc", mc.app_fc},
        {"geo_fc", mc.geo_fc},
        {"k", mc.k},
        {"passes", mc.passes},
        {"fact_attention", to_string(mc.fact_attention)},
        {"memory_init", to_string(mc.memory_init)},
        {"mode", to_string(mc.mode)}}},
      {"vocab", model.vocab().tokens()},
  };
  json echo = json::object();
  for (const auto& [k, v] : config_echo) echo[k] = v;
  manifest["config"] = std::move(echo);

  std::ofstream out(path + ".json", std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + ".json' for writing");
  out << manifest.dump(2) << "\n";
}

GroundingModel load_checkpoint(const std::string& path) {
  std::ifstream in(path + ".json", std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint manifest '" + path + ".json'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(path + ".json: " + e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != "kbrf-checkpoint") {
      throw DataError(path + ".json: not a checkpoint manifest");
    }
    const json& mcj = manifest.at("model_config");
    ModelConfig mc;
    mc.dq = mcj.at("dq").get<int64_t>();
    mc.channels = mcj.at("channels").get<int64_t>();
    mc.grid = mcj.at("grid").get<int64_t>();
    mc.app_dim = mcj.at("app_dim").get<int64_t>();
    mc.attn_hidden = mcj.at("attn_hidden").get<int64_t>();
    mc.emm_hidden = mcj.at("emm_hidden").get<int64_t>();
    mc.app_fc = mcj.at("app_fc").get<int64_t>();
    mc.geo_fc = mcj.at("geo_fc").get<int64_t>();
    mc.k = mcj.at("k").get<int64_t>();
    mc.passes = mcj.at("passes").get<int64_t>();
    mc.fact_attention = fact_attention_from_string(mcj.at("fact_attention").get<std::string>());
    mc.memory_init = memory_init_from_string(mcj.at("memory_init").get<std::string>());
    mc.mode = mode_from_string(mcj.at("mode").get<std::string>());

    auto tokens = manifest.at("vocab").get<std::vector<std::string>>();
    Vocabulary vocab;
    for (size_t i = 2; i < tokens.size(); ++i) vocab.add(tokens[i]);

    GroundingModel model(mc, std::move(vocab), /*seed=*/0);

    TensorContainer c = TensorContainer::read_file(path);
    for (ParamTensor* p : model.params().all()) {
      if (!c.has(p->name)) {
        throw DataError(path + ": checkpoint is missing parameter '" + p->name + "'");
      }
      Tensor t = c.get(p->name);
      if (!t.same_shape(p->value)) {
        throw DataError(path + ": parameter '" + p->name + "' has shape " + t.shape_str() +
                        ", expected " + p->value.shape_str());
      }
      p->value = std::move(t);
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(path + ".json: " + e.what());
  }
}

}  // namespace kbref
