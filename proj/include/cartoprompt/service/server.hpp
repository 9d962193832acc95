#pragma once

// HTTP facade over a loaded feature store:
//   GET  /v1/preprompt?lat=&lon=&radius=   descriptor and preprompt text
//   POST /v1/ask                           question answering through a completion model
//   GET  /v1/embeddings                    the colored embedding layer (GeoJSON)
// Errors are JSON objects {code, message}.

#include <openssl/evp.h>

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>

#include "cartoprompt/detail/httplib.hpp"
#include "json.hpp"

#include "cartoprompt/curate/pairs.hpp"
#include "cartoprompt/descriptor.hpp"
#include "cartoprompt/errors.hpp"
#include "cartoprompt/http.hpp"
#include "cartoprompt/service/config.hpp"
#include "cartoprompt/service/store.hpp"
#include "cartoprompt/verbalize.hpp"

namespace cartoprompt::service {

// ---------------------------------------------------------------------------
// Logging

class JsonLogger {
 public:
  explicit JsonLogger(std::ostream* out = &std::cerr) : out_(out) {}

  void log(const std::string& level, const std::string& event, nlohmann::ordered_json fields = nlohmann::ordered_json::object()) {
    if (!out_) return;
    nlohmann::ordered_json j;
    j["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
    j["level"] = level;
    j["event"] = event;
    for (auto& [k, v] : fields.items()) j[k] = v;
    const std::string line = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::lock_guard lock(mu_);
    *out_ << line << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Shared with the CLI so both print identical bodies.

inline double clamp_radius(double r) { return std::clamp(r, kMinRadiusM, kMaxApiRadiusM); }

inline nlohmann::ordered_json preprompt_json(const FeatureStore& store, const geo::LatLon& center, double radius_m,
                                             const DescriptorConfig& cfg = {}, const VerbalizerRules& rules = {}) {
  const AreaDescriptor d = build_descriptor(store.features, geo::CircleSpec{center, clamp_radius(radius_m)}, cfg);
  nlohmann::ordered_json j;
  j["descriptor"] = to_json(d);
  j["preprompt"] = render_preprompt(d, rules);
  return j;
}

inline std::string preprompt_body(const FeatureStore& store, const geo::LatLon& center, double radius_m,
                                  const DescriptorConfig& cfg = {}, const VerbalizerRules& rules = {}) {
  return preprompt_json(store, center, radius_m, cfg, rules).dump();
}

// `Area : {preprompt} Question : {question} Answer :`
inline std::string ask_prompt(const std::string& preprompt, const std::string& question) {
  return std::string(curate::kAreaPrefix) + preprompt + std::string(curate::kQuestionMarker) + question + " Answer :";
}

// ---------------------------------------------------------------------------
// Upstream completion model

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  // Throws TransportError (carrying the upstream status), TimeoutError or FormatError.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model() const = 0;
};

// Text-completion wire format: request {model, prompt}, reply choices[0].text.
class HttpCompletionClient : public CompletionClient {
 public:
  explicit HttpCompletionClient(CompletionEndpoint ep) : ep_(std::move(ep)) {}

  std::string complete(const std::string& prompt) override {
    http::RequestOptions opts;
    opts.timeout = ep_.timeout;
    if (const auto tok = ep_.token(); !tok.empty()) opts.headers.emplace("Authorization", "Bearer " + tok);
    const nlohmann::json req{{"model", ep_.model}, {"prompt", prompt}};
    const auto res = http::post(ep_.url, req.dump(), "application/json", opts);
    if (res.status != 200) throw TransportError("completion endpoint returned an error", res.status);
    try {
      return nlohmann::json::parse(res.body).at("choices").at(0).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("unexpected completion response: ") + e.what());
    }
  }
  std::string model() const override { return ep_.model; }

 private:
  CompletionEndpoint ep_;
};

// ---------------------------------------------------------------------------
// Helpers

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Whole-string decimal parse; rejects trailing junk, NaN and infinities.
inline std::optional<double> parse_strict_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* b = s.data();
  if (*b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool etag_matches(const std::string& header, const std::string& etag) {
  if (header == "*") return true;
  std::size_t pos = 0;
  while (pos <= header.size()) {
    auto comma = header.find(',', pos);
    if (comma == std::string::npos) comma = header.size();
    std::string tok = header.substr(pos, comma - pos);
    const auto a = tok.find_first_not_of(" \t"), z = tok.find_last_not_of(" \t");
    tok = a == std::string::npos ? "" : tok.substr(a, z - a + 1);
    if (tok.rfind("W/", 0) == 0) tok = tok.substr(2);
    if (tok == etag) return true;
    pos = comma + 1;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Service

struct ServiceOptions {
  DescriptorConfig descriptor;
  VerbalizerRules verbalizer;
  std::string embeddings_path;  // empty: /v1/embeddings always answers 404
  int ask_concurrency = 4;
};

class Service {
 public:
  Service(std::shared_ptr<const FeatureStore> store, ServiceOptions opts, std::shared_ptr<CompletionClient> completion,
          std::shared_ptr<JsonLogger> logger = std::make_shared<JsonLogger>())
      : store_(std::move(store)),
        opts_(std::move(opts)),
        completion_(std::move(completion)),
        log_(std::move(logger)),
        ask_slots_(std::clamp(opts_.ask_concurrency, 1, kMaxAskConcurrency)) {
    if (!store_) throw PreconditionError("service needs a feature store");
    if (opts_.ask_concurrency < 1 || opts_.ask_concurrency > kMaxAskConcurrency)
      throw ConfigError("ask_concurrency must be in [1, " + std::to_string(kMaxAskConcurrency) + "]");
  }

  void mount(httplib::Server& srv) {
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    srv.Get("/v1/preprompt", [this](const httplib::Request& q, httplib::Response& r) { handle_preprompt(q, r); });
    srv.Post("/v1/ask", [this](const httplib::Request& q, httplib::Response& r) { handle_ask(q, r); });
    srv.Get("/v1/embeddings", [this](const httplib::Request& q, httplib::Response& r) { handle_embeddings(q, r); });
    srv.Get("/v1/health", [](const httplib::Request&, httplib::Response& r) {
      r.set_content(R"({"status":"ok"})", "application/json");
    });
    srv.set_exception_handler([this](const httplib::Request& q, httplib::Response& r, std::exception_ptr ep) {
      std::string what = "unknown";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      log_->log("error", "unhandled", {{"path", q.path}, {"error", what}});
      error(r, 500, "internal", "internal server error");
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& r) {
      if (r.body.empty()) error(r, r.status, r.status == 404 ? "not_found" : "error", httplib::status_message(r.status));
    });
    srv.set_logger([this](const httplib::Request& q, const httplib::Response& r) {
      log_->log("info", "request", {{"method", q.method}, {"path", q.path}, {"status", r.status}});
    });
  }

  static void error(httplib::Response& r, int status, const std::string& code, const std::string& message,
                    nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json j{{"code", code}, {"message", message}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    r.status = status;
    r.set_content(j.dump(), "application/json");
  }

  static constexpr int kMaxAskConcurrency = 1024;

 private:
  struct Location {
    geo::LatLon center;
    double radius_m;
  };

  // Validates coordinates and radius; on failure fills the response and returns nullopt.
  std::optional<Location> locate(std::optional<double> lat, std::optional<double> lon, std::optional<double> radius,
                                 bool radius_given, httplib::Response& r) const {
    if (!lat || !lon || *lat < -90 || *lat > 90 || *lon < -180 || *lon > 180) {
      error(r, 400, "invalid_location", "lat and lon must be numbers within [-90, 90] and [-180, 180]");
      return std::nullopt;
    }
    if (radius_given && (!radius || !(*radius > 0))) {
      error(r, 400, "invalid_radius", "radius must be a positive number of meters");
      return std::nullopt;
    }
    const geo::LatLon c{*lat, *lon};
    if (!store_->covers(c)) {
      error(r, 422, "outside_data", "center lies outside the loaded data extent");
      return std::nullopt;
    }
    return Location{c, radius_given ? *radius : opts_.descriptor.radius_m};
  }

  void handle_preprompt(const httplib::Request& q, httplib::Response& r) {
    auto param = [&](const char* k) -> std::optional<double> {
      return q.has_param(k) ? parse_strict_double(q.get_param_value(k)) : std::nullopt;
    };
    const auto loc = locate(param("lat"), param("lon"), param("radius"), q.has_param("radius"), r);
    if (!loc) return;
    r.set_content(preprompt_body(*store_, loc->center, loc->radius_m, opts_.descriptor, opts_.verbalizer), "application/json");
  }

  void handle_ask(const httplib::Request& q, httplib::Response& r) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(q.body);
    } catch (const nlohmann::json::parse_error&) {
      return error(r, 400, "invalid_json", "request body must be a JSON object");
    }
    if (!body.is_object()) return error(r, 400, "invalid_json", "request body must be a JSON object");
    auto num = [&](const char* k) -> std::optional<double> {
      if (!body.contains(k) || !body[k].is_number()) return std::nullopt;
      return body[k].get<double>();
    };
    const auto loc = locate(num("lat"), num("lon"), num("radius_m"), body.contains("radius_m"), r);
    if (!loc) return;
    if (!body.contains("question") || !body["question"].is_string())
      return error(r, 400, "invalid_question", "question must be a non-empty string");
    const std::string question = body["question"].get<std::string>();
    if (question.find_first_not_of(" \t\r\n") == std::string::npos)
      return error(r, 400, "invalid_question", "question must be a non-empty string");
    if (!completion_) return error(r, 503, "no_completion_endpoint", "no completion endpoint configured");

    const std::string preprompt = preprompt_json(*store_, loc->center, loc->radius_m, opts_.descriptor, opts_.verbalizer)["preprompt"];
    const std::string prompt = ask_prompt(preprompt, question);
    log_->log("info", "ask_prompt", {{"prompt", prompt}});

    const auto t0 = std::chrono::steady_clock::now();
    std::string answer;
    {
      ask_slots_.acquire();
      struct Release {
        std::counting_semaphore<kMaxAskConcurrency>& s;
        ~Release() { s.release(); }
      } release{ask_slots_};
      try {
        answer = completion_->complete(prompt);
      } catch (const TransportError& e) {
        log_->log("warn", "upstream_error", {{"status", e.status()}, {"error", e.what()}});
        return error(r, 502, "upstream_error", "completion endpoint failed", {{"upstream_status", e.status()}});
      } catch (const TimeoutError& e) {
        log_->log("warn", "upstream_timeout", {{"error", e.what()}});
        return error(r, 502, "upstream_timeout", "completion endpoint timed out", {{"upstream_status", 0}});
      } catch (const FormatError& e) {
        log_->log("warn", "upstream_format", {{"error", e.what()}});
        return error(r, 502, "upstream_format", "completion endpoint sent an unreadable reply", {{"upstream_status", 200}});
      }
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::ordered_json out{{"preprompt", preprompt}, {"answer", answer}, {"model", completion_->model()}, {"latency_ms", ms}};
    r.set_content(out.dump(), "application/json");
  }

  struct Artifact {
    std::string body;
    std::string etag;
  };

  // Loaded on first successful read and kept; the file is treated as immutable while serving.
  std::shared_ptr<const Artifact> artifact() {
    std::lock_guard lock(artifact_mu_);
    if (artifact_) return artifact_;
    if (opts_.embeddings_path.empty()) return nullptr;
    std::ifstream in(opts_.embeddings_path, std::ios::binary);
    if (!in) return nullptr;
    std::ostringstream ss;
    ss << in.rdbuf();
    auto a = std::make_shared<Artifact>();
    a->body = ss.str();
    a->etag = "\"" + sha256_hex(a->body) + "\"";
    artifact_ = a;
    return artifact_;
  }

  void handle_embeddings(const httplib::Request& q, httplib::Response& r) {
    const auto a = artifact();
    if (!a) return error(r, 404, "no_embeddings", "embedding layer not found; run `cartoprompt embed` first");
    r.set_header("ETag", a->etag);
    r.set_header("Cache-Control", "no-cache");
    if (q.has_header("If-None-Match") && etag_matches(q.get_header_value("If-None-Match"), a->etag)) {
      r.status = 304;
      return;
    }
    r.set_content(a->body, "application/geo+json");
  }

  std::shared_ptr<const FeatureStore> store_;
  ServiceOptions opts_;
  std::shared_ptr<CompletionClient> completion_;
  std::shared_ptr<JsonLogger> log_;
  std::counting_semaphore<kMaxAskConcurrency> ask_slots_;
  std::mutex artifact_mu_;
  std::shared_ptr<const Artifact> artifact_;
};

}  // namespace cartoprompt::service
