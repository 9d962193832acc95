#pragma once

// `cartoprompt` command line: ingest, describe, preprompts, curate, split, embed, serve.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cartoprompt/detail/httplib.hpp"
#include "json.hpp"

#include "cartoprompt/curate/runner.hpp"
#include "cartoprompt/embed.hpp"
#include "cartoprompt/errors.hpp"
#include "cartoprompt/osm/overpass.hpp"
#include "cartoprompt/service/config.hpp"
#include "cartoprompt/service/server.hpp"
#include "cartoprompt/service/store.hpp"

namespace cartoprompt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct Center {
  std::string id;
  geo::LatLon location;
  std::optional<double> radius_m;
};

// CSV rows `id,lat,lon[,radius_m]`; a first line whose lat is not numeric is a header.
inline std::vector<Center> read_centers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Center> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() < 3 || cells.size() > 4) throw FormatError("expected id,lat,lon[,radius_m]", n);
    const auto lat = service::parse_strict_double(cells[1]);
    const auto lon = service::parse_strict_double(cells[2]);
    if (!lat || !lon) {
      if (n == 1) continue;
      throw FormatError("lat/lon are not numbers", n);
    }
    Center c{cells[0], {*lat, *lon}, std::nullopt};
    if (cells.size() == 4 && !cells[3].empty()) {
      c.radius_m = service::parse_strict_double(cells[3]);
      if (!c.radius_m) throw FormatError("radius is not a number", n);
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct PrepromptRecord {
  std::string id;
  geo::LatLon location;
  double radius_m = 300;
  std::string text;
};

inline std::string preprompt_record_jsonl(const PrepromptRecord& r) {
  nlohmann::ordered_json j{{"preprompt_id", r.id}, {"lat", r.location.lat}, {"lon", r.location.lon},
                           {"radius_m", r.radius_m}, {"preprompt", r.text}};
  return j.dump();
}

inline std::vector<PrepromptRecord> read_preprompt_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<PrepromptRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PrepromptRecord r;
      r.id = j.at("preprompt_id").get<std::string>();
      r.text = j.at("preprompt").get<std::string>();
      r.location = {j.value("lat", 0.0), j.value("lon", 0.0)};
      r.radius_m = j.value("radius_m", 300.0);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad preprompt line: ") + e.what(), n);
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(std::move(line));
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

inline std::atomic<bool> g_stop{false};
inline void on_signal(int) { g_stop = true; }

}  // namespace detail

// Runs the command line. `out` receives results, `err` usage text and diagnostics.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Turns OpenStreetMap data into area descriptions, datasets and embedding maps.", "cartoprompt"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::string config_path;
  app.add_option("--config", config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);

  service::PipelineConfig cfg;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse OSM sources into a feature store snapshot");
  std::vector<std::string> osm_files, overpass_files;
  std::string store_path, rejects_path, overpass_endpoint;
  std::optional<double> fetch_lat, fetch_lon;
  double fetch_half = 1000;
  ingest->add_option("--osm", osm_files, "OSM XML file (repeatable)");
  ingest->add_option("--overpass-json", overpass_files, "saved Overpass JSON response (repeatable)");
  ingest->add_option("--overpass-endpoint", overpass_endpoint, "live Overpass interpreter URL");
  ingest->add_option("--fetch-lat", fetch_lat, "center latitude of a live Overpass fetch");
  ingest->add_option("--fetch-lon", fetch_lon, "center longitude of a live Overpass fetch");
  ingest->add_option("--fetch-half-size", fetch_half, "half side of the fetched box in meters");
  ingest->add_option("--store", store_path, "output snapshot path")->required();
  ingest->add_option("--rejects", rejects_path, "write rejected elements as JSON lines");

  // describe
  auto* describe = app.add_subcommand("describe", "print the descriptor and preprompt of one area");
  double lat = 0, lon = 0, radius = 300;
  bool text_only = false;
  describe->add_option("--store", store_path, "feature store snapshot")->required();
  describe->add_option("--lat", lat, "center latitude")->required();
  describe->add_option("--lon", lon, "center longitude")->required();
  auto* describe_radius = describe->add_option("--radius", radius, "radius in meters (clamped to [50, 2000])");
  describe->add_flag("--text", text_only, "print only the preprompt text");

  // preprompts
  auto* preprompts = app.add_subcommand("preprompts", "render preprompts for a list of centers");
  std::string centers_path, out_path;
  preprompts->add_option("--store", store_path, "feature store snapshot")->required();
  preprompts->add_option("--centers", centers_path, "CSV id,lat,lon[,radius_m]")->required()->check(CLI::ExistingFile);
  preprompts->add_option("--out", out_path, "output JSON lines")->required();
  auto* preprompts_radius = preprompts->add_option("--radius", radius, "default radius in meters");

  // curate
  auto* curate_cmd = app.add_subcommand("curate", "generate question/answer datapoints through a teacher model");
  std::string preprompts_path, report_path;
  curate::CurationJob job;
  long rate_ms = -1;
  curate_cmd->add_option("--preprompts", preprompts_path, "preprompt JSON lines")->required()->check(CLI::ExistingFile);
  curate_cmd->add_option("--out", out_path, "dataset JSON lines (appended, resumable)")->required();
  curate_cmd->add_option("--report", report_path, "curation report JSON");
  auto* curate_endpoint = curate_cmd->add_option("--endpoint", job.endpoint, "chat-completions URL");
  auto* curate_model = curate_cmd->add_option("--model", job.model, "teacher model name");
  auto* curate_token = curate_cmd->add_option("--token-env", job.token_env, "environment variable holding the bearer token");
  auto* curate_pairs = curate_cmd->add_option("--pairs", job.pairs_per_request, "pairs requested per call");
  auto* curate_requests = curate_cmd->add_option("--requests", job.requests_per_preprompt, "calls per preprompt");
  auto* curate_rpm = curate_cmd->add_option("--rpm", job.rate_limit_per_minute, "request rate limit per minute");
  auto* curate_retries = curate_cmd->add_option("--max-retries", job.max_retries, "retries on transient failures");
  auto* curate_temp = curate_cmd->add_option("--temperature", job.temperature, "sampling temperature");
  curate_cmd->add_option("--backoff-ms", rate_ms, "initial retry delay in milliseconds");

  // split
  auto* split = app.add_subcommand("split", "partition a JSON-lines dataset into train and validation files");
  std::string input_path, train_path, val_path;
  double fraction = 0.99;
  std::uint64_t seed = 0;
  split->add_option("--input", input_path, "dataset JSON lines")->required()->check(CLI::ExistingFile);
  split->add_option("--train-out", train_path, "training output")->required();
  split->add_option("--val-out", val_path, "validation output")->required();
  auto* split_fraction = split->add_option("--fraction", fraction, "training fraction in (0, 1)");
  auto* split_seed = split->add_option("--seed", seed, "shuffle seed");

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "average word vectors, project to 2D and write a colored GeoJSON layer");
  std::string vectors_path, cache_path, method = "pca";
  bool cache_vectors = false;
  embed::ProjectionConfig proj;
  embed_cmd->add_option("--preprompts", preprompts_path, "preprompt JSON lines")->required()->check(CLI::ExistingFile);
  embed_cmd->add_option("--vectors", vectors_path, "word vectors, `token v1 .. vd` per line")->required()->check(CLI::ExistingFile);
  auto* embed_method = embed_cmd->add_option("--method", method, "pca or umap")->check(CLI::IsMember({"pca", "umap"}));
  embed_cmd->add_option("--out", out_path, "GeoJSON output")->required();
  embed_cmd->add_option("--cache", cache_path, "projection cache JSON lines");
  embed_cmd->add_flag("--cache-vectors", cache_vectors, "include averaged vectors in the cache");
  auto* embed_neighbors = embed_cmd->add_option("--neighbors", proj.n_neighbors, "UMAP n_neighbors");
  auto* embed_min_dist = embed_cmd->add_option("--min-dist", proj.min_dist, "UMAP min_dist");
  auto* embed_epochs = embed_cmd->add_option("--epochs", proj.epochs, "UMAP epochs (0: automatic)");
  auto* embed_seed = embed_cmd->add_option("--seed", proj.seed, "UMAP seed");

  // serve
  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  std::string host = "127.0.0.1", embeddings_path;
  int port = 8080, ask_concurrency = 4;
  service::CompletionEndpoint completion;
  serve->add_option("--store", store_path, "feature store snapshot")->required();
  auto* serve_host = serve->add_option("--host", host, "bind address");
  auto* serve_port = serve->add_option("--port", port, "port (0 picks a free one)");
  auto* serve_emb = serve->add_option("--embeddings", embeddings_path, "GeoJSON layer produced by `embed`");
  auto* serve_url = serve->add_option("--completion-url", completion.url, "text-completions URL for /v1/ask");
  auto* serve_model = serve->add_option("--model", completion.model, "completion model name");
  auto* serve_token = serve->add_option("--token-env", completion.token_env, "environment variable holding the bearer token");
  auto* serve_conc = serve->add_option("--ask-concurrency", ask_concurrency, "concurrent upstream calls");
  auto* serve_radius = serve->add_option("--radius", radius, "default radius in meters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_path.empty()) cfg = service::load_config(config_path);
    auto fill = [](CLI::Option* opt, auto& dst, const auto& from_cfg) {
      if (opt->count() == 0) dst = from_cfg;
    };

    if (ingest->parsed()) {
      service::IngestSources src{osm_files, overpass_files};
      if (osm_files.empty() && overpass_files.empty()) src = cfg.sources;
      if (overpass_endpoint.empty()) overpass_endpoint = cfg.overpass_endpoint;
      std::vector<std::string> tmp_files;
      if (fetch_lat || fetch_lon) {
        if (!fetch_lat || !fetch_lon || overpass_endpoint.empty()) {
          err << "a live fetch needs --fetch-lat, --fetch-lon and --overpass-endpoint\n";
          return kExitUsage;
        }
        const std::string body = osm::fetch_overpass(osm::overpass_bbox_query({*fetch_lat, *fetch_lon}, fetch_half), overpass_endpoint);
        const std::string tmp = store_path + ".overpass.json";
        std::ofstream(tmp, std::ios::binary) << body;
        src.overpass_files.push_back(tmp);
      }
      if (src.empty()) {
        err << "ingest needs --osm, --overpass-json or a live fetch\n";
        return kExitUsage;
      }
      const auto store = service::ingest(src);
      service::save_store(store, store_path);
      if (!rejects_path.empty()) {
        std::ofstream r(rejects_path, std::ios::trunc);
        r << osm::rejects_to_jsonl(store.features.rejects);
      }
      nlohmann::ordered_json summary{{"store", store_path},
                                     {"features", store.features.features.size()},
                                     {"rejects", store.features.rejects.size()}};
      out << summary.dump() << '\n';
      return kExitOk;
    }

    if (describe->parsed()) {
      fill(describe_radius, radius, cfg.descriptor.radius_m);
      const auto store = service::load_store(store_path);
      const auto j = service::preprompt_json(store, {lat, lon}, radius, cfg.descriptor, cfg.verbalizer);
      if (text_only) out << j["preprompt"].get<std::string>() << '\n';
      else out << j.dump() << '\n';
      return kExitOk;
    }

    if (preprompts->parsed()) {
      fill(preprompts_radius, radius, cfg.descriptor.radius_m);
      const auto store = service::load_store(store_path);
      std::vector<std::string> lines;
      for (const auto& c : read_centers(centers_path)) {
        const double r = service::clamp_radius(c.radius_m.value_or(radius));
        const auto j = service::preprompt_json(store, c.location, r, cfg.descriptor, cfg.verbalizer);
        lines.push_back(preprompt_record_jsonl({c.id, c.location, r, j["preprompt"].get<std::string>()}));
      }
      detail::write_lines(out_path, lines);
      out << nlohmann::ordered_json{{"preprompts", lines.size()}, {"out", out_path}}.dump() << '\n';
      return kExitOk;
    }

    if (curate_cmd->parsed()) {
      const auto& c = cfg.curation;
      fill(curate_endpoint, job.endpoint, c.endpoint);
      fill(curate_model, job.model, c.model);
      fill(curate_token, job.token_env, c.token_env);
      fill(curate_pairs, job.pairs_per_request, c.pairs_per_request);
      fill(curate_requests, job.requests_per_preprompt, c.requests_per_preprompt);
      fill(curate_rpm, job.rate_limit_per_minute, c.rate_limit_per_minute);
      fill(curate_retries, job.max_retries, c.max_retries);
      fill(curate_temp, job.temperature, c.temperature);
      job.refusal_filters = c.refusal_filters;
      if (rate_ms >= 0) job.backoff.initial = curate::Millis(rate_ms);
      if (job.endpoint.empty() || job.model.empty()) {
        err << "curate needs --endpoint and --model (or a configuration providing them)\n";
        return kExitUsage;
      }
      for (const auto& r : read_preprompt_records(preprompts_path)) job.preprompts.push_back({r.id, r.text});
      curate::HttpTeacherClient client(job.endpoint, curate::token_from_env(job.token_env), job.timeout);
      const auto report = curate::run_curation(job, client, {out_path, report_path});
      long failed = 0;
      for (const auto& [_, r] : report.preprompts) failed += r.failed ? 1 : 0;
      out << nlohmann::ordered_json{{"kept", report.total_kept()}, {"failed_preprompts", failed}}.dump() << '\n';
      return kExitOk;
    }

    if (split->parsed()) {
      fill(split_fraction, fraction, cfg.split_fraction);
      fill(split_seed, seed, cfg.split_seed);
      auto parts = curate::split_dataset(detail::read_lines(input_path), fraction, seed);
      detail::write_lines(train_path, parts.train);
      detail::write_lines(val_path, parts.validation);
      out << nlohmann::ordered_json{{"train", parts.train.size()}, {"validation", parts.validation.size()}}.dump() << '\n';
      return kExitOk;
    }

    if (embed_cmd->parsed()) {
      if (embed_method->count() == 0) proj.method = cfg.projection.method;
      else proj.method = embed::method_from_string(method);
      fill(embed_neighbors, proj.n_neighbors, cfg.projection.n_neighbors);
      fill(embed_min_dist, proj.min_dist, cfg.projection.min_dist);
      fill(embed_epochs, proj.epochs, cfg.projection.epochs);
      fill(embed_seed, proj.seed, cfg.projection.seed);
      const auto lex = embed::load_word_vectors(vectors_path);
      std::vector<embed::LayerInput> inputs;
      for (const auto& r : read_preprompt_records(preprompts_path)) inputs.push_back({r.id, r.location, r.text});
      const auto layer = embed::build_layer(lex, inputs, proj);
      for (const auto& w : layer.warnings) err << "warning: " << w << '\n';
      {
        std::ofstream o(out_path, std::ios::trunc);
        if (!o) throw Error("cannot write " + out_path);
        o << embed::emit_geojson(layer.points) << '\n';
      }
      if (!cache_path.empty()) embed::write_cache(cache_path, layer.points, cache_vectors);
      out << nlohmann::ordered_json{{"features", layer.points.size()}, {"method", embed::to_string(proj.method)}, {"out", out_path}}.dump()
          << '\n';
      return kExitOk;
    }

    if (serve->parsed()) {
      fill(serve_host, host, cfg.host);
      fill(serve_port, port, cfg.port);
      fill(serve_emb, embeddings_path, cfg.embeddings_path);
      fill(serve_url, completion.url, cfg.completion.url);
      fill(serve_model, completion.model, cfg.completion.model);
      fill(serve_token, completion.token_env, cfg.completion.token_env);
      fill(serve_conc, ask_concurrency, cfg.ask_concurrency);
      fill(serve_radius, radius, cfg.descriptor.radius_m);
      completion.timeout = cfg.completion.timeout;

      auto store = std::make_shared<const service::FeatureStore>(service::load_store(store_path));
      service::ServiceOptions opts;
      opts.descriptor = cfg.descriptor;
      opts.descriptor.radius_m = service::clamp_radius(radius);
      opts.verbalizer = cfg.verbalizer;
      opts.embeddings_path = embeddings_path;
      opts.ask_concurrency = ask_concurrency;
      std::shared_ptr<service::CompletionClient> client;
      if (!completion.url.empty()) client = std::make_shared<service::HttpCompletionClient>(completion);
      auto logger = std::make_shared<service::JsonLogger>(&err);
      service::Service svc(store, opts, client, logger);
      httplib::Server srv;
      svc.mount(srv);
      const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
      if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
      logger->log("info", "listening", {{"host", host}, {"port", bound}, {"features", store->features.features.size()}});

      detail::g_stop = false;
      std::signal(SIGINT, detail::on_signal);
      std::signal(SIGTERM, detail::on_signal);
      std::thread watcher([&] {
        while (!detail::g_stop && !srv.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
        while (!detail::g_stop && srv.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        srv.stop();
      });
      srv.listen_after_bind();
      detail::g_stop = true;
      watcher.join();
      logger->log("info", "stopped");
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace cartoprompt::cli
