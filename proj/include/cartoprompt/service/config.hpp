#pragma once

// Pipeline configuration file (JSON). Secrets are never stored in the file: each
// endpoint names an environment variable holding its bearer token.

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cartoprompt/curate/runner.hpp"
#include "cartoprompt/descriptor.hpp"
#include "cartoprompt/embed/project.hpp"
#include "cartoprompt/errors.hpp"
#include "cartoprompt/service/store.hpp"
#include "cartoprompt/verbalize.hpp"

namespace cartoprompt::service {

inline constexpr double kMinRadiusM = 50.0;
inline constexpr double kMaxApiRadiusM = 2000.0;

struct CompletionEndpoint {
  std::string url;  // full text-completions URL
  std::string model;
  std::string token_env = "CARTOPROMPT_COMPLETION_TOKEN";
  std::chrono::milliseconds timeout{60000};

  std::string token() const { return curate::token_from_env(token_env); }
};

struct PipelineConfig {
  IngestSources sources;
  std::string overpass_endpoint;
  std::string store_path = "store.json";
  DescriptorConfig descriptor;
  VerbalizerRules verbalizer;
  curate::CurationJob curation;  // preprompts are supplied at run time
  double split_fraction = 0.99;
  std::uint64_t split_seed = 0;
  embed::ProjectionConfig projection;
  CompletionEndpoint completion;
  std::string host = "127.0.0.1";
  int port = 8080;
  int ask_concurrency = 4;
  std::string embeddings_path = "embeddings.geojson";

  void validate() const {
    if (sources.empty() && overpass_endpoint.empty()) throw ConfigError("at least one data source is required");
    descriptor.validate();
    curation.validate();
    projection.validate();
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split fraction must be in (0, 1)");
    if (port < 0 || port > 65535) throw ConfigError("port out of range");
    if (ask_concurrency < 1) throw ConfigError("ask_concurrency must be >= 1");
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// Unknown keys are ignored; missing keys keep their defaults.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    using detail::read_opt;
    if (j.contains("sources")) {
      const auto& s = j["sources"];
      read_opt(s, "osm_files", c.sources.osm_files);
      read_opt(s, "overpass_files", c.sources.overpass_files);
      read_opt(s, "overpass_endpoint", c.overpass_endpoint);
    }
    read_opt(j, "store_path", c.store_path);
    if (j.contains("descriptor")) {
      const auto& d = j["descriptor"];
      read_opt(d, "radius_m", c.descriptor.radius_m);
      read_opt(d, "coverage_threshold", c.descriptor.coverage_threshold);
      read_opt(d, "province_admin_level", c.descriptor.province_admin_level);
      read_opt(d, "district_admin_level", c.descriptor.district_admin_level);
      read_opt(d, "road_key", c.descriptor.road_key);
      read_opt(d, "rail_key", c.descriptor.rail_key);
      read_opt(d, "landuse_exclusions", c.descriptor.landuse_exclusions);
      read_opt(d, "ngon_segments", c.descriptor.geo.ngon_segments);
    }
    if (j.contains("curation")) {
      const auto& k = j["curation"];
      read_opt(k, "endpoint", c.curation.endpoint);
      read_opt(k, "model", c.curation.model);
      read_opt(k, "token_env", c.curation.token_env);
      read_opt(k, "pairs_per_request", c.curation.pairs_per_request);
      read_opt(k, "requests_per_preprompt", c.curation.requests_per_preprompt);
      read_opt(k, "temperature", c.curation.temperature);
      read_opt(k, "max_retries", c.curation.max_retries);
      read_opt(k, "rate_limit_per_minute", c.curation.rate_limit_per_minute);
      read_opt(k, "refusal_filters", c.curation.refusal_filters);
    }
    if (j.contains("split")) {
      read_opt(j["split"], "fraction", c.split_fraction);
      read_opt(j["split"], "seed", c.split_seed);
    }
    if (j.contains("projection")) {
      const auto& p = j["projection"];
      if (p.contains("method")) c.projection.method = embed::method_from_string(p["method"].get<std::string>());
      read_opt(p, "n_neighbors", c.projection.n_neighbors);
      read_opt(p, "min_dist", c.projection.min_dist);
      read_opt(p, "epochs", c.projection.epochs);
      read_opt(p, "seed", c.projection.seed);
    }
    if (j.contains("completion")) {
      const auto& p = j["completion"];
      read_opt(p, "url", c.completion.url);
      read_opt(p, "model", c.completion.model);
      read_opt(p, "token_env", c.completion.token_env);
      if (p.contains("timeout_ms")) c.completion.timeout = std::chrono::milliseconds(p["timeout_ms"].get<long>());
    }
    if (j.contains("server")) {
      const auto& s = j["server"];
      read_opt(s, "host", c.host);
      read_opt(s, "port", c.port);
      read_opt(s, "ask_concurrency", c.ask_concurrency);
      read_opt(s, "embeddings_path", c.embeddings_path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return config_from_json(nlohmann::json::parse(ss.str(), nullptr, true, /*ignore_comments=*/true));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
}

}  // namespace cartoprompt::service
