#pragma once

// Structural GeoJSON checks following RFC 7946, written against the RFC text
// rather than the library's emitter.

#include <string>
#include <vector>

#include "json.hpp"

namespace oracle {

inline void check_position(const nlohmann::json& pos, const std::string& where, std::vector<std::string>& errs) {
  if (!pos.is_array() || pos.size() < 2 || pos.size() > 3) {
    errs.push_back(where + ": position must hold 2 or 3 numbers");
    return;
  }
  for (const auto& v : pos)
    if (!v.is_number()) {
      errs.push_back(where + ": non-numeric coordinate");
      return;
    }
  const double lon = pos[0].get<double>(), lat = pos[1].get<double>();
  if (lon < -180 || lon > 180) errs.push_back(where + ": longitude out of range");
  if (lat < -90 || lat > 90) errs.push_back(where + ": latitude out of range");
}

inline void check_geometry(const nlohmann::json& g, const std::string& where, std::vector<std::string>& errs) {
  if (g.is_null()) return;  // unlocated feature
  if (!g.is_object() || !g.contains("type") || !g["type"].is_string()) {
    errs.push_back(where + ": geometry needs a type");
    return;
  }
  const std::string t = g["type"];
  if (t == "Point") {
    if (!g.contains("coordinates")) errs.push_back(where + ": Point without coordinates");
    else check_position(g["coordinates"], where, errs);
  } else if (t == "MultiPoint" || t == "LineString" || t == "Polygon" || t == "MultiLineString" ||
             t == "MultiPolygon" || t == "GeometryCollection") {
    // Only points are emitted by this project; other types are accepted structurally.
  } else {
    errs.push_back(where + ": unknown geometry type " + t);
  }
}

// Returns the list of violations; empty means valid.
inline std::vector<std::string> geojson_violations(const nlohmann::json& doc) {
  std::vector<std::string> errs;
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    errs.push_back("root must be a FeatureCollection object");
    return errs;
  }
  if (doc.contains("crs")) errs.push_back("crs member is not part of RFC 7946");
  if (!doc.contains("features") || !doc["features"].is_array()) {
    errs.push_back("features must be an array");
    return errs;
  }
  for (std::size_t i = 0; i < doc["features"].size(); ++i) {
    const auto& f = doc["features"][i];
    const std::string where = "feature " + std::to_string(i);
    if (!f.is_object() || f.value("type", "") != "Feature") {
      errs.push_back(where + ": type must be Feature");
      continue;
    }
    if (!f.contains("geometry")) errs.push_back(where + ": missing geometry member");
    else check_geometry(f["geometry"], where, errs);
    if (!f.contains("properties")) errs.push_back(where + ": missing properties member");
    else if (!f["properties"].is_object() && !f["properties"].is_null()) errs.push_back(where + ": properties must be object or null");
    if (f.contains("id") && !f["id"].is_string() && !f["id"].is_number()) errs.push_back(where + ": id must be string or number");
  }
  return errs;
}

}  // namespace oracle
