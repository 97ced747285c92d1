#include "kbref/dataset.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kbref/errors.hpp"
#include "kbref/text_analysis.hpp"

namespace kbref {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& origin, int64_t lineno, const std::string& what) {
  throw DataError(origin + ":" + std::to_string(lineno) + ": " + what);
}

Sample parse_sample(const json& j, const std::string& origin, int64_t lineno) {
  Sample s;
  s.expression = j.at("expression").get<std::string>();
  s.tokens = tokenize(s.expression);
  s.image_id = j.at("image_id").get<std::string>();
  if (s.image_id.find('/') != std::string::npos) {
    fail(origin, lineno, "image_id must not contain '/'");
  }
  s.image_width = j.at("width").get<double>();
  s.image_height = j.at("height").get<double>();
  if (!(s.image_width > 0) || !(s.image_height > 0)) {
    fail(origin, lineno, "image width/height must be positive");
  }
  if (j.contains("pos") && !j.at("pos").is_null()) {
    s.pos = j.at("pos").get<std::vector<std::string>>();
    if (s.pos->size() != s.tokens.size()) {
      fail(origin, lineno,
           "pos has " + std::to_string(s.pos->size()) + " tags for " +
               std::to_string(s.tokens.size()) + " tokens");
    }
  }
  for (const json& cj : j.at("candidates")) {
    SampleCandidate c;
    const json& b = cj.at("box");
    if (!b.is_array() || b.size() != 4) fail(origin, lineno, "box must be [x_tl,y_tl,x_br,y_br]");
    c.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    c.category = cj.at("category").get<std::string>();
    if (!(c.box.x_tl >= 0 && c.box.x_tl < c.box.x_br && c.box.x_br <= s.image_width) ||
        !(c.box.y_tl >= 0 && c.box.y_tl < c.box.y_br && c.box.y_br <= s.image_height)) {
      fail(origin, lineno, "invalid candidate box");
    }
    s.candidates.push_back(std::move(c));
  }
  if (s.candidates.size() < 2) fail(origin, lineno, "a sample needs at least 2 candidates");
  s.target_index = j.at("target_index").get<int64_t>();
  if (s.target_index < 0 || s.target_index >= static_cast<int64_t>(s.candidates.size())) {
    fail(origin, lineno, "target_index out of range");
  }
  if (j.contains("gt_fact_id") && !j.at("gt_fact_id").is_null()) {
    s.gt_fact_id = j.at("gt_fact_id").get<int64_t>();
    if (*s.gt_fact_id < 0) fail(origin, lineno, "gt_fact_id must be non-negative");
  }
  return s;
}

json sample_to_json(const Sample& s) {
  json j{{"expression", s.expression},
         {"image_id", s.image_id},
         {"width", s.image_width},
         {"height", s.image_height},
         {"target_index", s.target_index}};
  json cands = json::array();
  for (const auto& c : s.candidates) {
    cands.push_back(json{{"box", {c.box.x_tl, c.box.y_tl, c.box.x_br, c.box.y_br}},
                         {"category", c.category}});
  }
  j["candidates"] = std::move(cands);
  if (s.pos) j["pos"] = *s.pos;
  if (s.gt_fact_id) j["gt_fact_id"] = *s.gt_fact_id;
  return j;
}

}  // namespace

std::vector<Sample> load_samples(std::istream& in, const std::string& origin) {
  std::vector<Sample> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(origin, lineno, std::string("bad JSON: ") + e.what());
    }
    try {
      out.push_back(parse_sample(j, origin, lineno));
    } catch (const json::exception& e) {
      fail(origin, lineno, e.what());
    }
  }
  return out;
}

std::vector<Sample> load_samples_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_samples(in, path);
}

void save_samples(std::ostream& out, const std::vector<Sample>& samples) {
  for (const Sample& s : samples) out << sample_to_json(s).dump() << "\n";
}

void save_samples_file(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save_samples(out, samples);
}

void FeaturePack::set_grid(const std::string& image_id, Tensor t) {
  if (!t.all_finite()) throw DataError("grid features for '" + image_id + "' are non-finite");
  grid_[image_id] = std::move(t);
}

void FeaturePack::set_appearance(const std::string& image_id, int64_t candidate, Tensor t) {
  if (!t.all_finite()) {
    throw DataError("appearance features for '" + image_id + "' are non-finite");
  }
  appearance_[{image_id, candidate}] = std::move(t);
}

bool FeaturePack::has_grid(const std::string& image_id) const { return grid_.count(image_id); }

bool FeaturePack::has_appearance(const std::string& image_id, int64_t candidate) const {
  return appearance_.count({image_id, candidate}) != 0;
}

const Tensor& FeaturePack::grid(const std::string& image_id) const {
  auto it = grid_.find(image_id);
  if (it == grid_.end()) throw DataError("missing grid features for image '" + image_id + "'");
  return it->second;
}

const Tensor& FeaturePack::appearance(const std::string& image_id, int64_t candidate) const {
  auto it = appearance_.find({image_id, candidate});
  if (it == appearance_.end()) {
    throw DataError("missing appearance features for image '" + image_id + "' candidate " +
                    std::to_string(candidate));
  }
  return it->second;
}

TensorContainer FeaturePack::to_container() const {
  TensorContainer c;
  for (const auto& [id, t] : grid_) c.put("grid/" + id, t);
  for (const auto& [key, t] : appearance_) {
    c.put("app/" + key.first + "/" + std::to_string(key.second), t);
  }
  return c;
}

FeaturePack FeaturePack::from_container(const TensorContainer& c) {
  FeaturePack fp;
  for (const std::string& name : c.names()) {
    if (name.rfind("grid/", 0) == 0) {
      fp.set_grid(name.substr(5), c.get(name));
    } else if (name.rfind("app/", 0) == 0) {
      std::string rest = name.substr(4);
      size_t slash = rest.rfind('/');
      if (slash == std::string::npos) throw DataError("bad appearance entry name '" + name + "'");
      std::string id = rest.substr(0, slash);
      int64_t cand = 0;
      try {
        cand = std::stoll(rest.substr(slash + 1));
      } catch (const std::exception&) {
        throw DataError("bad appearance entry name '" + name + "'");
      }
      fp.set_appearance(id, cand, c.get(name));
    } else {
      throw DataError("unrecognized feature entry '" + name + "'");
    }
  }
  return fp;
}

void FeaturePack::save(const std::string& path) const { to_container().write_file(path); }

FeaturePack FeaturePack::load(const std::string& path) {
  return from_container(TensorContainer::read_file(path));
}

}  // namespace kbref
