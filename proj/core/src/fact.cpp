#include "kbref/fact.hpp"

#include <cctype>

#include "kbref/errors.hpp"

namespace kbref {

std::string to_string(FactSource s) {
  switch (s) {
    case FactSource::ConceptNet: return "conceptnet";
    case FactSource::WebChild: return "webchild";
    case FactSource::Wikipedia: return "wikipedia";
    case FactSource::Other: return "other";
  }
  return "other";
}

FactSource fact_source_from_string(const std::string& s) {
  std::string low;
  for (char c : s) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "conceptnet") return FactSource::ConceptNet;
  if (low == "webchild") return FactSource::WebChild;
  if (low == "wikipedia") return FactSource::Wikipedia;
  if (low == "other") return FactSource::Other;
  throw DataError("unknown fact source '" + s + "'");
}

Relation Relation::parse(const std::string& tag) {
  static const std::pair<const char*, RelationKind> kKnown[] = {
      {"isa", RelationKind::IsA},
      {"hasa", RelationKind::HasA},
      {"partof", RelationKind::PartOf},
      {"madeof", RelationKind::MadeOf},
      {"usedfor", RelationKind::UsedFor},
      {"capableof", RelationKind::CapableOf},
      {"hasshape", RelationKind::HasShape},
      {"hassize", RelationKind::HasSize},
      {"hastaste", RelationKind::HasTaste},
      {"fasterthan", RelationKind::FasterThan},
      {"smallerthan", RelationKind::SmallerThan},
      {"physicalpartof", RelationKind::PhysicalPartOf},
      {"substanceof", RelationKind::SubstanceOf},
      {"memberof", RelationKind::MemberOf},
  };
  std::string low;
  for (char c : tag) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u == '_' || u == '-' || u == ' ') continue;
    low.push_back(static_cast<char>(std::tolower(u)));
  }
  Relation r;
  r.raw = tag;
  for (const auto& [name, kind] : kKnown) {
    if (low == name) {
      r.kind = kind;
      return r;
    }
  }
  r.kind = RelationKind::Other;
  return r;
}

std::string normalize_category(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

}  // namespace kbref
