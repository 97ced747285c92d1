#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kbref {

enum class FactSource { ConceptNet, WebChild, Wikipedia, Other };

std::string to_string(FactSource s);
// Accepts "conceptnet", "webchild", "wikipedia", "other" (case-insensitive).
FactSource fact_source_from_string(const std::string& s);

// Closed relation set; tags outside it are carried verbatim as Other.
enum class RelationKind {
  IsA,
  HasA,
  PartOf,
  MadeOf,
  UsedFor,
  CapableOf,
  HasShape,
  HasSize,
  HasTaste,
  FasterThan,
  SmallerThan,
  PhysicalPartOf,
  SubstanceOf,
  MemberOf,
  Other,
};

struct Relation {
  RelationKind kind = RelationKind::Other;
  std::string raw;  // original tag, used by the generic template

  static Relation parse(const std::string& tag);
};

struct Triplet {
  std::string start;
  Relation relation;
  std::string end;
  FactSource source = FactSource::ConceptNet;
};

// One commonsense statement; the unit of retrieval and attention.
struct Fact {
  int64_t id = -1;
  FactSource source = FactSource::Other;
  std::string category;                 // primary: start node / article theme
  std::vector<std::string> categories;  // all index keys (start and end for triplets)
  std::string text;
  std::vector<std::string> tokens;      // tokenize(text)
};

// Lowercase + trim + collapse internal whitespace. No singularization:
// lookups are exact-match only.
std::string normalize_category(const std::string& s);

}  // namespace kbref
