#pragma once

// OSM XML v0.6 reader (libexpat) and writer.

#include <expat.h>

#include <charconv>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "cartoprompt/errors.hpp"
#include "cartoprompt/osm/graph.hpp"

namespace cartoprompt::osm {

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<ElementId> parse_id(std::string_view s) {
  ElementId v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<ElementKind> parse_kind(std::string_view s) {
  if (s == "node") return ElementKind::node;
  if (s == "way") return ElementKind::way;
  if (s == "relation") return ElementKind::relation;
  return std::nullopt;
}

class XmlBuilder {
 public:
  static void on_start(void* self, const XML_Char* name, const XML_Char** attrs) {
    static_cast<XmlBuilder*>(self)->start(name, attrs);
  }
  static void on_end(void* self, const XML_Char* name) { static_cast<XmlBuilder*>(self)->end(name); }

  OsmGraph take() { return std::move(graph_); }

 private:
  enum class Current { none, node, way, relation, skipped };

  static std::optional<std::string_view> attr(const XML_Char** attrs, std::string_view key) {
    for (int i = 0; attrs[i]; i += 2)
      if (key == attrs[i]) return std::string_view(attrs[i + 1]);
    return std::nullopt;
  }

  void reject(ElementKind kind, ElementId id, std::string reason) {
    graph_.rejects.push_back({to_string(kind), id, std::move(reason)});
  }

  void start(std::string_view name, const XML_Char** attrs) {
    ++depth_;
    if (name == "node" || name == "way" || name == "relation") {
      start_element(*parse_kind(name), attrs);
      return;
    }
    if (name == "tag") {
      if (current_ == Current::none || current_ == Current::skipped) return;
      auto k = attr(attrs, "k");
      auto v = attr(attrs, "v");
      if (k && v) tags_[std::string(*k)] = std::string(*v);
      return;
    }
    if (name == "nd") {
      if (current_ != Current::way) return;
      auto ref = attr(attrs, "ref");
      auto id = ref ? parse_id(*ref) : std::nullopt;
      if (id) way_.refs.push_back(*id);
      else bad_child_ = "nd without a valid ref";
      return;
    }
    if (name == "member") {
      if (current_ != Current::relation) return;
      auto type = attr(attrs, "type");
      auto ref = attr(attrs, "ref");
      auto role = attr(attrs, "role");
      auto kind = type ? parse_kind(*type) : std::nullopt;
      auto id = ref ? parse_id(*ref) : std::nullopt;
      if (kind && id) relation_.members.push_back({*kind, *id, role ? std::string(*role) : std::string()});
      else bad_child_ = "member without a valid type/ref";
      return;
    }
    if (name == "osm" || name == "bounds" || name == "note" || name == "meta") return;
    ++graph_.skipped_unknown;
  }

  void start_element(ElementKind kind, const XML_Char** attrs) {
    tags_.clear();
    bad_child_.clear();
    auto id_attr = attr(attrs, "id");
    auto id = id_attr ? parse_id(*id_attr) : std::nullopt;
    element_depth_ = depth_;
    if (!id) {
      graph_.rejects.push_back({to_string(kind), 0, "missing or invalid id"});
      current_ = Current::skipped;
      return;
    }
    id_ = *id;
    switch (kind) {
      case ElementKind::node: {
        auto lat_s = attr(attrs, "lat");
        auto lon_s = attr(attrs, "lon");
        auto lat = lat_s ? parse_double(*lat_s) : std::nullopt;
        auto lon = lon_s ? parse_double(*lon_s) : std::nullopt;
        if (!lat || !lon) {
          reject(kind, id_, "missing lat/lon");
          current_ = Current::skipped;
        } else if (!valid_lat_lon(*lat, *lon)) {
          reject(kind, id_, "lat/lon out of range");
          current_ = Current::skipped;
        } else {
          node_ = Node{*lat, *lon, {}};
          current_ = Current::node;
        }
        break;
      }
      case ElementKind::way:
        way_ = Way{};
        current_ = Current::way;
        break;
      case ElementKind::relation:
        relation_ = Relation{};
        current_ = Current::relation;
        break;
    }
  }

  void end(std::string_view name) {
    if (depth_-- != element_depth_) return;
    if (name != "node" && name != "way" && name != "relation") return;
    const Current done = current_;
    current_ = Current::none;
    element_depth_ = -1;
    if (done == Current::skipped || done == Current::none) return;
    const ElementKind kind = *parse_kind(name);
    if (!bad_child_.empty()) {
      reject(kind, id_, bad_child_);
      return;
    }
    bool inserted = false;
    switch (done) {
      case Current::node:
        node_.tags = std::move(tags_);
        inserted = graph_.nodes.emplace(id_, std::move(node_)).second;
        break;
      case Current::way:
        way_.tags = std::move(tags_);
        inserted = graph_.ways.emplace(id_, std::move(way_)).second;
        break;
      case Current::relation:
        relation_.tags = std::move(tags_);
        inserted = graph_.relations.emplace(id_, std::move(relation_)).second;
        break;
      default: break;
    }
    if (!inserted) reject(kind, id_, "duplicate id");
    tags_ = {};
  }

  OsmGraph graph_;
  Current current_ = Current::none;
  int depth_ = 0;
  int element_depth_ = -1;
  ElementId id_ = 0;
  Tags tags_;
  Node node_;
  Way way_;
  Relation relation_;
  std::string bad_child_;
};

inline void xml_escape(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\n': out += "&#10;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
}

inline std::string shortest(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline void write_tags(std::string& out, const Tags& tags) {
  for (const auto& [k, v] : tags) {
    out += "    <tag k=\"";
    xml_escape(out, k);
    out += "\" v=\"";
    xml_escape(out, v);
    out += "\"/>\n";
  }
}

}  // namespace detail

// Throws ParseError (with byte offset) on malformed XML. Elements that are well-formed but
// unusable (missing lat/lon, bad ids, duplicates) land in graph.rejects instead.
inline OsmGraph parse_osm_xml(std::span<const char> bytes) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) throw Error("cannot allocate XML parser");
  detail::XmlBuilder builder;
  XML_SetUserData(parser.get(), &builder);
  XML_SetElementHandler(parser.get(), &detail::XmlBuilder::on_start, &detail::XmlBuilder::on_end);
  if (XML_Parse(parser.get(), bytes.data(), static_cast<int>(bytes.size()), XML_TRUE) == XML_STATUS_ERROR) {
    const auto offset = XML_GetCurrentByteIndex(parser.get());
    throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(parser.get())),
                     offset < 0 ? 0 : static_cast<std::size_t>(offset));
  }
  OsmGraph g = builder.take();
  g.resolve();
  return g;
}

inline OsmGraph parse_osm_xml(std::string_view text) { return parse_osm_xml(std::span<const char>(text.data(), text.size())); }
inline OsmGraph parse_osm_xml(const std::string& text) { return parse_osm_xml(std::string_view(text)); }
inline OsmGraph parse_osm_xml(const char* text) { return parse_osm_xml(std::string_view(text)); }

// Serializes the element inventory back to OSM XML v0.6.
inline std::string write_osm_xml(const OsmGraph& g) {
  using detail::shortest;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"cartoprompt\">\n";
  for (const auto& [id, n] : g.nodes) {
    out += "  <node id=\"" + std::to_string(id) + "\" lat=\"" + shortest(n.lat) + "\" lon=\"" + shortest(n.lon) + "\"";
    if (n.tags.empty()) {
      out += "/>\n";
      continue;
    }
    out += ">\n";
    detail::write_tags(out, n.tags);
    out += "  </node>\n";
  }
  for (const auto& [id, w] : g.ways) {
    out += "  <way id=\"" + std::to_string(id) + "\">\n";
    for (ElementId r : w.refs) out += "    <nd ref=\"" + std::to_string(r) + "\"/>\n";
    detail::write_tags(out, w.tags);
    out += "  </way>\n";
  }
  for (const auto& [id, rel] : g.relations) {
    out += "  <relation id=\"" + std::to_string(id) + "\">\n";
    for (const auto& m : rel.members) {
      out += std::string("    <member type=\"") + to_string(m.type) + "\" ref=\"" + std::to_string(m.ref) + "\" role=\"";
      detail::xml_escape(out, m.role);
      out += "\"/>\n";
    }
    detail::write_tags(out, rel.tags);
    out += "  </relation>\n";
  }
  out += "</osm>\n";
  return out;
}

}  // namespace cartoprompt::osm
