#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace cartoprompt::osm {

using ElementId = std::int64_t;
using Tags = std::map<std::string, std::string>;

enum class ElementKind { node, way, relation };

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::node: return "node";
    case ElementKind::way: return "way";
    case ElementKind::relation: return "relation";
  }
  return "?";
}

struct Node {
  double lat = 0.0;
  double lon = 0.0;
  Tags tags;

  friend bool operator==(const Node&, const Node&) = default;
};

struct Way {
  std::vector<ElementId> refs;
  Tags tags;
  bool incomplete = false;  // some ref does not resolve to a node in the graph

  bool closed() const { return refs.size() >= 4 && refs.front() == refs.back(); }

  friend bool operator==(const Way&, const Way&) = default;
};

struct Member {
  ElementKind type = ElementKind::node;
  ElementId ref = 0;
  std::string role;

  friend bool operator==(const Member&, const Member&) = default;
};

struct Relation {
  std::vector<Member> members;
  Tags tags;

  friend bool operator==(const Relation&, const Relation&) = default;
};

// One line of the rejects report: `{kind, id, reason}`.
struct Reject {
  std::string kind;
  ElementId id = 0;
  std::string reason;

  nlohmann::json to_json() const { return {{"kind", kind}, {"id", id}, {"reason", reason}}; }
};

inline std::string rejects_to_jsonl(const std::vector<Reject>& rejects) {
  std::string out;
  for (const auto& r : rejects) out += r.to_json().dump() + "\n";
  return out;
}

struct OsmGraph {
  std::map<ElementId, Node> nodes;
  std::map<ElementId, Way> ways;
  std::map<ElementId, Relation> relations;

  std::vector<Reject> rejects;
  std::size_t skipped_unknown = 0;  // unknown element kinds seen while parsing

  // Flags ways whose refs do not all resolve. Called by the parsers once all elements are in.
  void resolve() {
    for (auto& [id, way] : ways) {
      way.incomplete = false;
      for (ElementId ref : way.refs) {
        if (!nodes.contains(ref)) {
          way.incomplete = true;
          break;
        }
      }
    }
  }

  // Element inventory equality (ids, coordinates, refs, members, tags); ignores diagnostics.
  bool same_elements(const OsmGraph& o) const {
    return nodes == o.nodes && ways == o.ways && relations == o.relations;
  }
};

inline bool valid_lat_lon(double lat, double lon) {
  return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

}  // namespace cartoprompt::osm
