#pragma once

// Colors, GeoJSON layer and the JSON-lines projection cache.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cartoprompt/embed/lexicon.hpp"
#include "cartoprompt/embed/project.hpp"
#include "cartoprompt/errors.hpp"
#include "cartoprompt/geo.hpp"

namespace cartoprompt::embed {

struct Rgb {
  int r = 128, g = 128, b = 128;
  bool operator==(const Rgb&) const = default;
};

struct EmbeddingPoint {
  std::string preprompt_id;
  geo::LatLon location;
  Vector vector;  // may be empty when only the projection is kept
  Point2 xy{0.0, 0.0};
  Rgb color;
};

// Red follows the first axis and green the second, each rescaled to [0, 255].
// Blue is constant. An axis with zero extent maps to 128.
inline std::vector<Rgb> colorize(const std::vector<Point2>& xy) {
  std::vector<Rgb> out(xy.size());
  for (int axis = 0; axis < 2; ++axis) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : xy) {
      lo = std::min(lo, p[axis]);
      hi = std::max(hi, p[axis]);
    }
    for (std::size_t i = 0; i < xy.size(); ++i) {
      const int c = hi > lo ? static_cast<int>(std::lround((xy[i][axis] - lo) / (hi - lo) * 255.0)) : 128;
      (axis == 0 ? out[i].r : out[i].g) = std::clamp(c, 0, 255);
    }
  }
  return out;
}

inline std::string hex_color(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", c.r, c.g, c.b);
  return buf;
}

inline std::optional<Rgb> parse_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') return std::nullopt;
  Rgb c;
  int* ch[3] = {&c.r, &c.g, &c.b};
  for (int k = 0; k < 3; ++k) {
    int v = 0;
    for (int j = 0; j < 2; ++j) {
      const char x = s[1 + 2 * k + j];
      int d;
      if (x >= '0' && x <= '9') d = x - '0';
      else if (x >= 'a' && x <= 'f') d = x - 'a' + 10;
      else if (x >= 'A' && x <= 'F') d = x - 'A' + 10;
      else return std::nullopt;
      v = v * 16 + d;
    }
    *ch[k] = v;
  }
  return c;
}

inline nlohmann::ordered_json to_geojson(const std::vector<EmbeddingPoint>& points) {
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    if (!std::isfinite(p.xy[0]) || !std::isfinite(p.xy[1])) throw PreconditionError("non-finite projection for " + p.preprompt_id);
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {p.location.lon, p.location.lat}}}},
                        {"properties",
                         {{"preprompt_id", p.preprompt_id}, {"color", hex_color(p.color)}, {"x2d", p.xy[0]}, {"y2d", p.xy[1]}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

inline std::string emit_geojson(const std::vector<EmbeddingPoint>& points) { return to_geojson(points).dump(); }

// One JSON object per line: {preprompt_id, lat, lon, vector?, x2d, y2d, color}.
inline void write_cache(const std::string& path, const std::vector<EmbeddingPoint>& points, bool with_vectors) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& p : points) {
    nlohmann::ordered_json j{{"preprompt_id", p.preprompt_id}, {"lat", p.location.lat}, {"lon", p.location.lon}};
    if (with_vectors) j["vector"] = p.vector;
    j["x2d"] = p.xy[0];
    j["y2d"] = p.xy[1];
    j["color"] = hex_color(p.color);
    out << j.dump() << '\n';
  }
}

inline std::vector<EmbeddingPoint> read_cache(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<EmbeddingPoint> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingPoint p;
      p.preprompt_id = j.at("preprompt_id").get<std::string>();
      p.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
      if (j.contains("vector")) p.vector = j.at("vector").get<Vector>();
      p.xy = {j.at("x2d").get<double>(), j.at("y2d").get<double>()};
      const auto c = parse_hex_color(j.at("color").get<std::string>());
      if (!c) throw FormatError("bad color", n);
      p.color = *c;
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad cache line: ") + e.what(), n);
    }
  }
  return out;
}

struct LayerInput {
  std::string preprompt_id;
  geo::LatLon location;
  std::string text;
};

struct LayerResult {
  std::vector<EmbeddingPoint> points;
  std::vector<std::string> warnings;
};

// Embed, project and color a batch of preprompts.
inline LayerResult build_layer(const Lexicon& lex, const std::vector<LayerInput>& inputs, const ProjectionConfig& cfg = {}) {
  LayerResult r;
  std::vector<Vector> vectors;
  vectors.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto e = embed_text(lex, in.text);
    if (e.all_oov()) r.warnings.push_back("no in-vocabulary tokens in " + in.preprompt_id);
    vectors.push_back(std::move(e.vector));
  }
  auto proj = project_2d(vectors, cfg);
  r.warnings.insert(r.warnings.end(), proj.warnings.begin(), proj.warnings.end());
  const auto colors = colorize(proj.points);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    r.points.push_back({inputs[i].preprompt_id, inputs[i].location, std::move(vectors[i]), proj.points[i], colors[i]});
  return r;
}

}  // namespace cartoprompt::embed
