#include "kbref/fact_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kbref/errors.hpp"
#include "kbref/text_analysis.hpp"

namespace kbref {

using nlohmann::json;

const char* const kTemplateTableVersion = "v1";

namespace {

const char* template_for(RelationKind k) {
  switch (k) {
    case RelationKind::IsA: return "a {s} is a {e}";
    case RelationKind::HasA: return "a {s} has a {e}";
    case RelationKind::PartOf: return "a {s} is part of a {e}";
    case RelationKind::MadeOf: return "a {s} is made of {e}";
    case RelationKind::UsedFor: return "a {s} is used for {e}";
    case RelationKind::CapableOf: return "a {s} is capable of {e}";
    case RelationKind::HasShape: return "a {s} has a {e} shape";
    case RelationKind::HasSize: return "a {s} has a {e} size";
    case RelationKind::HasTaste: return "a {s} tastes {e}";
    case RelationKind::FasterThan: return "a {s} is faster than a {e}";
    case RelationKind::SmallerThan: return "a {s} is smaller than a {e}";
    case RelationKind::PhysicalPartOf: return "a {s} is a physical part of a {e}";
    case RelationKind::SubstanceOf: return "a {s} is a substance of a {e}";
    case RelationKind::MemberOf: return "a {s} is a member of a {e}";
    case RelationKind::Other: return nullptr;
  }
  return nullptr;
}

// "RelatedTo" -> "related to"; underscores and dashes also become spaces.
std::string relation_words(const std::string& tag) {
  std::string out;
  for (size_t i = 0; i < tag.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(tag[i]);
    if (c == '_' || c == '-') {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      continue;
    }
    if (std::isupper(c) && i > 0 && !out.empty() && out.back() != ' ') out.push_back(' ');
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string substitute(const std::string& tmpl, const std::string& s, const std::string& e) {
  std::string out;
  for (size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 3, "{s}") == 0) {
      out += s;
      i += 3;
    } else if (tmpl.compare(i, 3, "{e}") == 0) {
      out += e;
      i += 3;
    } else {
      out.push_back(tmpl[i]);
      ++i;
    }
  }
  return out;
}

// Words before a '.' that never end a sentence. Lowercased, trailing period
// included. Guard list version: v1.
const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "e.g.", "i.e.",  "etc.", "mr.",  "mrs.", "ms.",  "dr.", "prof.", "st.",
      "vs.",  "cf.",   "fig.", "no.",  "al.",  "inc.", "jr.", "sr.",   "approx.",
  };
  return kAbbrev;
}

// Word ending at position i (inclusive), lowercased: span back to the
// previous whitespace.
std::string word_ending_at(const std::string& text, size_t i) {
  size_t b = i;
  while (b > 0 && !std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
  std::string w = text.substr(b, i - b + 1);
  for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return w;
}

bool is_sentence_boundary(const std::string& text, size_t i) {
  char c = text[i];
  if (c == '!' || c == '?') return true;
  if (c != '.') return false;
  if (abbreviations().count(word_ending_at(text, i))) return false;
  // A period followed by a lowercase letter or digit continues the sentence.
  size_t j = i + 1;
  while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
  if (j < text.size()) {
    unsigned char n = static_cast<unsigned char>(text[j]);
    if (std::islower(n) || std::isdigit(n)) return false;
  }
  return true;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

json fact_to_json(const Fact& f) {
  return json{{"id", f.id},
              {"source", to_string(f.source)},
              {"category", f.category},
              {"categories", f.categories},
              {"text", f.text},
              {"tokens", f.tokens}};
}

}  // namespace

std::string triplet_to_sentence(const Triplet& t) {
  std::string s = normalize_category(t.start);
  std::string e = normalize_category(t.end);
  if (s.empty() || e.empty()) {
    throw DataError("malformed triplet: empty start or end node");
  }
  if (const char* tmpl = template_for(t.relation.kind)) {
    return substitute(tmpl, s, e);
  }
  std::string words = relation_words(t.relation.raw);
  if (words.empty()) words = "related to";
  return s + " " + words + " " + e;
}

std::vector<Fact> split_article(const std::string& category, const std::string& article) {
  std::vector<Fact> out;
  std::string cat = normalize_category(category);
  size_t start = 0;
  auto flush = [&](size_t end_excl) {
    std::string sentence = trim(article.substr(start, end_excl - start));
    if (!sentence.empty()) {
      std::vector<std::string> toks = tokenize(sentence);
      if (toks.size() >= 3) {
        Fact f;
        f.source = FactSource::Wikipedia;
        f.category = cat;
        f.categories = {cat};
        f.text = sentence;
        f.tokens = std::move(toks);
        out.push_back(std::move(f));
      }
    }
  };
  for (size_t i = 0; i < article.size(); ++i) {
    char c = article[i];
    if ((c == '.' || c == '!' || c == '?') && is_sentence_boundary(article, i)) {
      // Absorb a run of terminators ("?!", "...").
      size_t j = i;
      while (j + 1 < article.size() &&
             (article[j + 1] == '.' || article[j + 1] == '!' || article[j + 1] == '?')) {
        ++j;
      }
      flush(j + 1);
      start = j + 1;
      i = j;
    }
  }
  if (start < article.size()) flush(article.size());
  return out;
}

int64_t FactStore::add_triplet(const Triplet& t) {
  Fact f;
  f.source = t.source;
  f.text = triplet_to_sentence(t);
  f.tokens = tokenize(f.text);
  f.category = normalize_category(t.start);
  f.categories = {f.category};
  std::string end_cat = normalize_category(t.end);
  if (end_cat != f.category) f.categories.push_back(end_cat);
  return add_fact(std::move(f));
}

int64_t FactStore::add_fact(Fact f) {
  if (f.text.empty()) throw DataError("fact with empty text");
  f.id = next_id_++;
  if (f.tokens.empty()) f.tokens = tokenize(f.text);
  if (f.categories.empty()) f.categories = {f.category};
  index_fact(f);
  int64_t id = f.id;
  facts_.emplace(id, std::move(f));
  return id;
}

void FactStore::index_fact(const Fact& f) {
  for (const auto& cat : f.categories) {
    by_category_[cat].push_back(f.id);
  }
}

const Fact& FactStore::fact(int64_t id) const {
  auto it = facts_.find(id);
  if (it == facts_.end()) throw DataError("unknown fact id " + std::to_string(id));
  return it->second;
}

std::vector<std::string> FactStore::categories() const {
  std::vector<std::string> out;
  out.reserve(by_category_.size());
  for (const auto& [cat, _] : by_category_) out.push_back(cat);
  return out;
}

std::vector<Fact> FactStore::facts_for_category(const std::string& category) const {
  std::vector<Fact> out;
  auto it = by_category_.find(category);
  if (it == by_category_.end()) return out;
  std::vector<int64_t> ids = it->second;
  std::sort(ids.begin(), ids.end());
  out.reserve(ids.size());
  for (int64_t id : ids) out.push_back(facts_.at(id));
  return out;
}

void FactStore::ingest_triplets(std::istream& in, const std::string& origin) {
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    try {
      Triplet t;
      t.start = j.at("start").get<std::string>();
      t.relation = Relation::parse(j.at("relation").get<std::string>());
      t.end = j.at("end").get<std::string>();
      t.source = j.contains("source") ? fact_source_from_string(j.at("source").get<std::string>())
                                      : FactSource::ConceptNet;
      add_triplet(t);
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void FactStore::ingest_articles(std::istream& in, const std::string& origin) {
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    try {
      std::string category = j.at("category").get<std::string>();
      std::string text = j.at("text").get<std::string>();
      for (Fact& f : split_article(category, text)) {
        add_fact(std::move(f));
      }
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void FactStore::save_jsonl(std::ostream& out) const {
  for (const auto& [_, f] : facts_) {
    out << fact_to_json(f).dump() << "\n";
  }
}

void FactStore::save_jsonl_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save_jsonl(out);
}

FactStore FactStore::load_jsonl(std::istream& in, const std::string& origin) {
  std::vector<Fact> facts;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    try {
      Fact f;
      f.id = j.at("id").get<int64_t>();
      f.source = fact_source_from_string(j.at("source").get<std::string>());
      f.category = j.at("category").get<std::string>();
      if (j.contains("categories")) {
        f.categories = j.at("categories").get<std::vector<std::string>>();
      } else {
        f.categories = {f.category};
      }
      f.text = j.at("text").get<std::string>();
      f.tokens = tokenize(f.text);
      if (f.id < 0) throw DataError("negative fact id");
      facts.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return from_facts(facts);
}

FactStore FactStore::load_jsonl_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_jsonl(in, path);
}

FactStore FactStore::from_facts(const std::vector<Fact>& facts) {
  FactStore s;
  for (const Fact& f : facts) {
    if (s.facts_.count(f.id)) {
      throw DataError("duplicate fact id " + std::to_string(f.id));
    }
    Fact copy = f;
    if (copy.tokens.empty()) copy.tokens = tokenize(copy.text);
    if (copy.categories.empty()) copy.categories = {copy.category};
    s.index_fact(copy);
    s.next_id_ = std::max(s.next_id_, copy.id + 1);
    s.facts_.emplace(copy.id, std::move(copy));
  }
  return s;
}

}  // namespace kbref
