#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kbref/fact.hpp"

namespace kbref {

// Version tag of the triplet sentence template table below. Tests pin the
// exact outputs, so any change to a template must bump this.
extern const char* const kTemplateTableVersion;

// Renders a triplet as one sentence using a fixed per-relation template,
// e.g. IsA: "a <start> is a <end>". Unknown relations fall back to
// "<start> <relation words> <end>" where the tag is split on case changes.
// Throws DataError when start or end is empty after normalization.
std::string triplet_to_sentence(const Triplet& t);

// Splits an article into per-sentence facts for `category`. Sentences end at
// '.', '!' or '?'; a '.' does not end a sentence when the word before it is
// on the abbreviation guard list (e.g., i.e., etc., mr., ...) or when the
// next non-space character is a lowercase letter or digit. Sentences with
// fewer than 3 tokens are dropped. Returned facts carry id -1 until added to
// a store.
std::vector<Fact> split_article(const std::string& category, const std::string& article);

// Immutable-after-build store of facts indexed by category. Triplet facts
// are indexed under both their start and end node labels; article facts
// under the article's theme category.
class FactStore {
 public:
  // Returns the assigned fact id. Ids start at 0 in ingestion order.
  int64_t add_triplet(const Triplet& t);
  int64_t add_fact(Fact f);

  // JSONL, one object per line: {"start","relation","end","source"}.
  void ingest_triplets(std::istream& in, const std::string& origin);
  // JSONL: {"category","text"}.
  void ingest_articles(std::istream& in, const std::string& origin);

  bool has_fact(int64_t id) const { return facts_.count(id) != 0; }
  const Fact& fact(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(facts_.size()); }
  const std::map<int64_t, Fact>& facts() const { return facts_; }
  std::vector<std::string> categories() const;

  // All facts indexed under `category` (already normalized), ascending id.
  std::vector<Fact> facts_for_category(const std::string& category) const;

  // Persistence: JSONL of fact records.
  void save_jsonl(std::ostream& out) const;
  void save_jsonl_file(const std::string& path) const;
  static FactStore load_jsonl(std::istream& in, const std::string& origin);
  static FactStore load_jsonl_file(const std::string& path);

  // Rebuild (e.g. after dedup) keeping the given ids.
  static FactStore from_facts(const std::vector<Fact>& facts);

 private:
  void index_fact(const Fact& f);

  std::map<int64_t, Fact> facts_;
  std::map<std::string, std::vector<int64_t>> by_category_;
  int64_t next_id_ = 0;
};

}  // namespace kbref
