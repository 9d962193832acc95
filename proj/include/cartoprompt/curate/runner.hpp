#pragma once

// Curation job driver: talks to a chat-completion teacher under a rate limit with
// retries, writes the dataset as JSON lines and a per-preprompt report.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cartoprompt/curate/pairs.hpp"
#include "cartoprompt/errors.hpp"
#include "cartoprompt/http.hpp"

namespace cartoprompt::curate {

using Millis = std::chrono::milliseconds;

struct Preprompt {
  std::string id;
  std::string text;
};

struct BackoffPolicy {
  Millis initial{1000};
  double multiplier = 2.0;
  Millis max{30000};

  // Delay before retry number `retry` (0-based).
  Millis delay(int retry) const {
    double d = static_cast<double>(initial.count());
    for (int i = 0; i < retry && d < static_cast<double>(max.count()); ++i) d *= multiplier;
    return Millis(std::min<long long>(static_cast<long long>(d), max.count()));
  }
};

struct CurationJob {
  std::vector<Preprompt> preprompts;
  int pairs_per_request = 50;
  int requests_per_preprompt = 1;
  std::string endpoint;  // full chat-completions URL
  std::string model;
  std::string token_env = "CARTOPROMPT_TEACHER_TOKEN";
  double temperature = 1.0;
  int max_retries = 3;
  double rate_limit_per_minute = 60.0;
  std::vector<std::string> refusal_filters = default_refusal_filters();
  BackoffPolicy backoff;
  Millis timeout{120000};

  void validate() const {
    if (pairs_per_request < 1) throw ConfigError("pairs_per_request must be >= 1");
    if (requests_per_preprompt < 1) throw ConfigError("requests_per_preprompt must be >= 1");
    if (!(rate_limit_per_minute > 0.0)) throw ConfigError("rate limit must be > 0");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  }
};

// Clock and sleep are injectable so tests run without real waiting.
struct Timing {
  std::function<std::chrono::steady_clock::time_point()> now = [] { return std::chrono::steady_clock::now(); };
  std::function<void(Millis)> sleep = [](Millis d) { std::this_thread::sleep_for(d); };
};

// Spaces request starts at least 60/rpm seconds apart.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, Timing timing = {})
      : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(60.0 / requests_per_minute))),
        timing_(std::move(timing)) {}

  // Returns how long the caller was held back.
  Millis acquire() {
    const auto now = timing_.now();
    Millis waited{0};
    if (started_ && now < next_) {
      waited = std::chrono::ceil<Millis>(next_ - now);
      timing_.sleep(waited);
    }
    next_ = std::max(now, started_ ? next_ : now) + interval_;
    started_ = true;
    return waited;
  }

 private:
  std::chrono::steady_clock::duration interval_;
  Timing timing_;
  std::chrono::steady_clock::time_point next_{};
  bool started_ = false;
};

struct TeacherRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
};

class TeacherClient {
 public:
  virtual ~TeacherClient() = default;
  // Returns the reply text; throws TransportError / TimeoutError / FormatError.
  virtual std::string complete(const TeacherRequest& req) = 0;
};

inline nlohmann::json chat_request_json(const TeacherRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model}, {"messages", msgs}, {"temperature", req.temperature}};
}

// choices[0].message.content of a chat-completion response.
inline std::string chat_reply_text(const std::string& body) {
  try {
    return nlohmann::json::parse(body).at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("unexpected chat-completion response: ") + e.what());
  }
}

class HttpTeacherClient : public TeacherClient {
 public:
  HttpTeacherClient(std::string endpoint, std::string bearer_token, Millis timeout = Millis(120000))
      : endpoint_(std::move(endpoint)), token_(std::move(bearer_token)), timeout_(timeout) {}

  std::string complete(const TeacherRequest& req) override {
    http::RequestOptions opts;
    opts.timeout = timeout_;
    if (!token_.empty()) opts.headers.emplace("Authorization", "Bearer " + token_);
    const auto res = http::post(endpoint_, chat_request_json(req).dump(), "application/json", opts);
    if (res.status != 200) throw TransportError("teacher endpoint returned an error", res.status);
    return chat_reply_text(res.body);
  }

 private:
  std::string endpoint_;
  std::string token_;
  Millis timeout_;
};

inline std::string token_from_env(const std::string& var) {
  const char* v = var.empty() ? nullptr : std::getenv(var.c_str());
  return v ? v : "";
}

inline bool retryable(const TransportError& e) { return e.status() == 0 || e.status() == 429 || e.status() >= 500; }

// ---------------------------------------------------------------------------
// Dataset files

inline std::string datapoint_jsonl(const Datapoint& d) {
  nlohmann::ordered_json j{{"text", d.text}, {"preprompt_id", d.preprompt_id}, {"pair_index", d.pair_index}};
  return j.dump();
}

inline std::vector<Datapoint> read_datapoints(const std::string& path) {
  std::ifstream in(path);
  std::vector<Datapoint> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("text").get<std::string>(), j.at("preprompt_id").get<std::string>(),
                     j.at("pair_index").get<long>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad dataset line: ") + e.what(), n);
    }
  }
  return out;
}

inline void write_datapoints(const std::string& path, const std::vector<Datapoint>& dps) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& d : dps) out << datapoint_jsonl(d) << '\n';
}

// ---------------------------------------------------------------------------
// Report

struct PrepromptReport {
  long requests = 0;   // HTTP attempts, retries included
  long parsed = 0;     // pairs extracted from replies
  long skipped = 0;    // dictionaries lacking prompt/answer keys
  long filtered = 0;   // pairs removed by the filter
  long kept = 0;
  long retries = 0;
  bool failed = false;
  bool resumed = false;  // already present in the output, not requested again
  std::vector<std::string> errors;
  std::vector<std::string> parse_errors;  // raw reply text
};

struct CurationReport {
  std::string model;
  double temperature = 1.0;
  int pairs_per_request = 50;
  std::map<std::string, PrepromptReport> preprompts;

  long total_kept() const {
    long n = 0;
    for (const auto& [_, r] : preprompts) n += r.kept;
    return n;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    long req = 0, parsed = 0, filtered = 0, kept = 0, failed = 0;
    for (const auto& [id, r] : preprompts) {
      per[id] = {{"requests", r.requests}, {"parsed", r.parsed},     {"skipped", r.skipped},
                 {"filtered", r.filtered}, {"kept", r.kept},         {"retries", r.retries},
                 {"failed", r.failed},     {"resumed", r.resumed},   {"errors", r.errors},
                 {"parse_errors", r.parse_errors}};
      req += r.requests;
      parsed += r.parsed;
      filtered += r.filtered;
      kept += r.kept;
      failed += r.failed ? 1 : 0;
    }
    return {{"model", model},
            {"temperature", temperature},
            {"pairs_per_request", pairs_per_request},
            {"totals", {{"requests", req}, {"parsed", parsed}, {"filtered", filtered}, {"kept", kept}, {"failed", failed}}},
            {"preprompts", per}};
  }
};

// ---------------------------------------------------------------------------
// Driver

struct CurationOutput {
  std::string dataset_path;
  std::string report_path;  // empty: no report file
};

inline CurationReport run_curation(const CurationJob& job, TeacherClient& client, const CurationOutput& out_paths,
                                   const Timing& timing = {}) {
  job.validate();
  CurationReport report;
  report.model = job.model;
  report.temperature = job.temperature;
  report.pairs_per_request = job.pairs_per_request;

  PairFilter filter(job.refusal_filters);
  std::set<std::string> done;
  {
    std::ifstream probe(out_paths.dataset_path);
    if (probe) {
      for (const auto& d : read_datapoints(out_paths.dataset_path)) {
        done.insert(d.preprompt_id);
        if (auto parts = split_datapoint(d.text)) filter.remember(parts->prompt, parts->answer);
      }
    }
  }

  std::ofstream out(out_paths.dataset_path, std::ios::app);
  if (!out) throw Error("cannot open " + out_paths.dataset_path + " for writing");
  RateLimiter limiter(job.rate_limit_per_minute, timing);

  for (const auto& pp : job.preprompts) {
    PrepromptReport& r = report.preprompts[pp.id];
    if (done.contains(pp.id)) {
      r.resumed = true;
      continue;
    }
    const TeacherRequest request{job.model, teacher_conversation(pp.text, job.pairs_per_request), job.temperature};
    std::vector<Datapoint> kept;
    for (int batch = 0; batch < job.requests_per_preprompt; ++batch) {
      std::optional<std::string> reply;
      for (int attempt = 0; attempt <= job.max_retries && !reply; ++attempt) {
        if (attempt > 0) {
          ++r.retries;
          timing.sleep(job.backoff.delay(attempt - 1));
        }
        limiter.acquire();
        ++r.requests;
        try {
          reply = client.complete(request);
        } catch (const TransportError& e) {
          r.errors.push_back(e.what());
          if (!retryable(e)) break;
        } catch (const TimeoutError& e) {
          r.errors.push_back(e.what());
        } catch (const FormatError& e) {
          r.errors.push_back(e.what());
          break;
        }
      }
      if (!reply) {
        r.failed = true;
        break;
      }
      ParsedPairs parsed;
      try {
        parsed = parse_pairs(*reply);
      } catch (const PairParseError& e) {
        r.parse_errors.push_back(e.raw_text());
        continue;
      }
      r.parsed += static_cast<long>(parsed.pairs.size());
      r.skipped += static_cast<long>(parsed.skipped);
      const std::string batch_id = pp.id + "#" + std::to_string(batch);
      for (auto& p : parsed.pairs) {
        p.source_preprompt_id = pp.id;
        p.teacher_batch = batch_id;
      }
      const auto batch_size = static_cast<long>(parsed.pairs.size());
      const auto survivors = filter.apply(std::move(parsed.pairs));
      r.filtered += batch_size - static_cast<long>(survivors.size());
      for (const auto& p : survivors) {
        kept.push_back(assemble_datapoint(pp.text, p, pp.id, static_cast<long>(kept.size())));
        ++r.kept;
      }
    }
    if (r.failed) {  // nothing is written; a rerun requests the whole preprompt again
      r.kept = 0;
      continue;
    }
    for (const auto& d : kept) out << datapoint_jsonl(d) << '\n';
    out.flush();
  }

  if (!out_paths.report_path.empty()) {
    std::ofstream rep(out_paths.report_path, std::ios::trunc);
    if (!rep) throw Error("cannot write " + out_paths.report_path);
    rep << report.to_json().dump(2) << '\n';
  }
  return report;
}

}  // namespace cartoprompt::curate
