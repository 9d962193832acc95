// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Links only the library; oracles come from tests/support.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cartoprompt/curate/runner.hpp"
#include "cartoprompt/embed.hpp"
#include "cartoprompt/service.hpp"
#include "support/clusters.hpp"
#include "support/geojson_check.hpp"
#include "support/mock_server.hpp"
#include "support/oracles.hpp"

using namespace cartoprompt;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::string temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("cp_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + CARTOPROMPT_CLI_PATH + "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const geo::LatLon kGoldenCenter{41.0115, 28.9560};

// Reference text as published, including its irregular spacing.
const std::string kReferencePreprompt =
    "This is a circular area of radius of 300 meters that intersects province(s) of İstanbul and district(s) of "
    "Fatih. There are 3 atm(s), 2 bank(s), 1 bureau_de_change(s), 18 cafe(s), 2 clinic(s), 1 court_house(s), 2 "
    "dentist(s), 1 driving_school(s), 2 events_venue(s), 11 fast_food(s), 1 guest_house(s), 3 hospital(s), 11 "
    "parking(s), 33 pharmacy(s), 9 place_of_worship(s), 1 post_office(s), 43 restaurant(s), 5 school(s), 1 "
    "shower(s).  There are 525 buildings which cover 31% of the total area.  It contains 289 meters of platform "
    "rail, 100 meters of footway road, 80 meters of pedestrian road, 44 meters of primary_link road, 2786 meters of "
    "residential road, 283 meters of service road, 20 meters of steps road, 1005 meters of tertiary road, 62 meters "
    "of tertiary_link road, 249 meters of unclassified road.";

// ---------------------------------------------------------------------------

Outcome golden_preprompt() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto store = service::ingest({{oracle::fixture("fatih_golden.osm")}, {}});
  const auto d = build_descriptor(store.features, kGoldenCenter);
  const std::string text = render_preprompt(d);
  const double secs = seconds_since(t0);
  o.check(normalize_spaces(text) == normalize_spaces(kReferencePreprompt), "rendered text differs from reference");
  o.check(text.find("There are 525 buildings which cover 31% of the total area") != std::string::npos,
          "building sentence missing");
  o.check(secs < 5.0, "runtime " + fmt(secs) + " s");
  o.note(fmt(secs) + " s");
  return o;
}

Outcome geometry() {
  Outcome o;
  const auto t0 = Clock::now();
  const double r = 300.0;
  const auto ngon = geo::circle_ngon(r);

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> offset(-100.0, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto pts = oracle::random_star_polygon(rng, 12, offset(rng), offset(rng), 150.0, 400.0);
    geo::Ring<geo::XY> ring;
    double x0 = r, x1 = -r, y0 = r, y1 = -r;
    for (const auto& p : pts) {
      ring.push_back({p.x, p.y});
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x), y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    ring.push_back(ring.front());
    // Sample only where both shapes can overlap.
    x0 = std::max(x0, -r), x1 = std::min(x1, r), y0 = std::max(y0, -r), y1 = std::min(y1, r);
    const double got = geo::intersection_area({ring, {}}, ngon);
    const double mc = oracle::monte_carlo_area(pts, x0, x1, y0, y1, 1'000'000, 500 + i, r);
    worst = std::max(worst, std::abs(got - mc) / mc);
  }
  o.check(worst < 0.005, "worst Monte Carlo deviation " + fmt(100 * worst) + "%");

  const double disc = std::numbers::pi * r * r;
  const double ngon_dev = (disc - geo::ring_area(ngon)) / disc;
  o.check(ngon_dev >= 0.0 && ngon_dev <= 0.00161, "64-gon deficit " + fmt(100 * ngon_dev, 5) + "%");

  const double chord = geo::clip_polyline_circle({{-2 * r, 0}, {2 * r, 0}}, r);
  o.check(std::abs(chord - 2 * r) <= 2 * r * 1e-9, "chord " + fmt(chord, 17));

  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime " + fmt(secs) + " s");
  o.note("worst MC " + fmt(100 * worst) + "%, 64-gon " + fmt(100 * ngon_dev, 5) + "%, " + fmt(secs) + " s");
  return o;
}

// Spherical direct problem, written independently of the library.
geo::LatLon destination(const geo::LatLon& from, double bearing, double dist, double radius = 6371008.8) {
  const double k = std::numbers::pi / 180.0;
  const double phi1 = from.lat * k, lam1 = from.lon * k, delta = dist / radius;
  const double phi2 = std::asin(std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(bearing));
  const double lam2 =
      lam1 + std::atan2(std::sin(bearing) * std::sin(delta) * std::cos(phi1), std::cos(delta) - std::sin(phi1) * std::sin(phi2));
  return {phi2 / k, lam2 / k};
}

Outcome projection() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double dist = 400.0 * std::sqrt(u(rng));
    if (dist < 1e-3) continue;
    const auto p = destination(kGoldenCenter, 2 * std::numbers::pi * u(rng), dist);
    const double planar = geo::norm(geo::project_local(kGoldenCenter, p));
    const double hav = geo::haversine(kGoldenCenter, p);
    worst = std::max(worst, std::abs(planar - hav) / hav);
  }
  o.check(worst < 1e-4, "worst relative error " + fmt(worst));
  o.note("worst " + fmt(worst));
  return o;
}

// Teacher double: scripted chat-completion replies keyed by the preprompt in the request.
struct ScriptedTeacher {
  test_support::MockServer server;
  std::mutex mu;
  std::map<std::string, int> calls;

  static std::string reply(const std::string& content) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
  }

  ScriptedTeacher() {
    server.http().Post("/v1/chat/completions", [this](const httplib::Request& q, httplib::Response& r) {
      const auto body = json::parse(q.body);
      std::string all;
      for (const auto& m : body["messages"]) all += m["content"].get<std::string>();
      const auto has = [&](const char* s) { return all.find(s) != std::string::npos; };
      std::string key = has("Alpha") ? "alpha" : has("Beta") ? "beta" : has("Gamma") ? "gamma" : "delta";
      int n;
      {
        std::lock_guard lock(mu);
        n = ++calls[key];
      }
      if (key == "alpha") {
        r.set_content(reply(oracle::read_file(oracle::fixture("teacher_reply_10.json"))), "application/json");
      } else if (key == "beta") {
        r.set_content(reply("Sorry, here are some thoughts about the area without a list."), "application/json");
      } else if (key == "gamma") {
        r.set_content(reply(R"([{"prompt": "Is there a park?", "answer": "No park is listed."},
                                {"prompt": "What is the crime rate?", "answer": "The preprompt does not provide sufficient info."},
                                {"prompt": "Are there schools?", "answer": "Yes, two schools."}])"),
                      "application/json");
      } else if (n == 1) {
        r.status = 503;
        r.set_content(R"({"error":"busy"})", "application/json");
      } else {
        r.set_content(reply(R"([{"prompt": "Is it near the sea?", "answer": "The area lists a ferry pier."},
                                {"prompt": "Can I buy bread?", "answer": "There are 2 bakeries."}])"),
                      "application/json");
      }
    });
    server.start();
  }
};

Outcome curation() {
  Outcome o;
  ScriptedTeacher teacher;
  const std::string dir = temp_dir("curate");

  curate::CurationJob job;
  job.preprompts = {{"a", "Alpha district with 18 cafes."},
                    {"b", "Beta district with a bank."},
                    {"c", "Gamma district with 2 schools."},
                    {"d", "Delta district with 2 bakeries."}};
  job.endpoint = teacher.server.url("/v1/chat/completions");
  job.model = "teacher";
  job.token_env = "";
  job.rate_limit_per_minute = 60000.0;
  job.backoff.initial = curate::Millis(1);
  job.timeout = curate::Millis(10000);
  curate::HttpTeacherClient client(job.endpoint, "", job.timeout);
  const auto report = curate::run_curation(job, client, {dir + "/data.jsonl", dir + "/report.json"});

  // Hand audit: alpha 10 pairs minus 2 refusals minus 1 duplicate = 7; beta malformed = 0;
  // gamma 3 minus 1 refusal = 2; delta retried after 503, 2 pairs = 2.
  const long expected = 11;
  const auto dps = curate::read_datapoints(dir + "/data.jsonl");
  o.check(static_cast<long>(dps.size()) == expected, "dataset has " + std::to_string(dps.size()) + " datapoints");
  o.check(report.total_kept() == expected, "report kept " + std::to_string(report.total_kept()));
  o.check(!report.preprompts.at("b").parse_errors.empty(), "malformed reply not reported");
  o.check(report.preprompts.at("d").retries == 1, "503 was not retried once");

  std::map<std::string, std::string> preprompt_of;
  for (const auto& p : job.preprompts) preprompt_of[p.id] = p.text;
  for (const auto& d : dps) {
    const auto parts = curate::split_datapoint(d.text);
    const bool ok = parts && parts->preprompt == preprompt_of[d.preprompt_id] &&
                    curate::assemble_datapoint(parts->preprompt, {parts->prompt, parts->answer, "", ""}).text == d.text;
    o.check(ok, "datapoint does not round-trip: " + d.text);
  }

  const auto check_split = [&](std::size_t n, std::size_t want_val, const std::string& label) {
    std::vector<std::size_t> items(n);
    std::iota(items.begin(), items.end(), 0);
    const auto s = curate::split_dataset(items, 0.99, 0);
    std::set<std::size_t> train(s.train.begin(), s.train.end()), val(s.validation.begin(), s.validation.end());
    std::set<std::size_t> all = train;
    all.insert(val.begin(), val.end());
    bool disjoint = train.size() == s.train.size() && val.size() == s.validation.size() && all.size() == n;
    o.check(s.validation.size() == want_val && s.train.size() == n - want_val,
            label + " split " + std::to_string(s.train.size()) + "/" + std::to_string(s.validation.size()));
    o.check(disjoint, label + " split not disjoint or not exhaustive");
  };
  check_split(4111, 41, "N=4111");
  check_split(dps.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.01 * dps.size()))),
              "curated N=" + std::to_string(dps.size()));

  o.note(std::to_string(dps.size()) + " datapoints, 4111 -> 4070/41");
  fs::remove_all(dir);
  return o;
}

double max_relative_distortion(const std::vector<embed::Point2>& p, const std::vector<std::vector<double>>& v) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      double hi = 0.0;
      for (std::size_t k = 0; k < v[i].size(); ++k) hi += (v[i][k] - v[j][k]) * (v[i][k] - v[j][k]);
      hi = std::sqrt(hi);
      const double lo = std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]);
      if (hi > 0) worst = std::max(worst, std::abs(lo - hi) / hi);
    }
  return worst;
}

Outcome embedding() {
  Outcome o;
  const auto lex = embed::load_word_vectors(oracle::fixture("vectors16.txt"));
  for (const char* w : {"cafe", "park", "residential"}) {
    const auto* v = lex.find(w);
    o.check(v && embed::embed_text(lex, w).vector == *v, std::string("single token not exact: ") + w);
  }

  // Planar data in a random 2-plane of R^12.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01;
  std::vector<double> e1(12), e2(12);
  for (auto& x : e1) x = n01(rng);
  for (auto& x : e2) x = n01(rng);
  const auto dotp = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  const double n1 = std::sqrt(dotp(e1, e1));
  for (auto& x : e1) x /= n1;
  const double proj = dotp(e1, e2);
  for (std::size_t k = 0; k < 12; ++k) e2[k] -= proj * e1[k];
  const double n2 = std::sqrt(dotp(e2, e2));
  for (auto& x : e2) x /= n2;
  std::vector<std::vector<double>> planar;
  for (int i = 0; i < 40; ++i) {
    const double a = 20 * n01(rng), b = 5 * n01(rng);
    std::vector<double> x(12);
    for (std::size_t k = 0; k < 12; ++k) x[k] = 3.0 + a * e1[k] + b * e2[k];
    planar.push_back(x);
  }
  const double distortion = max_relative_distortion(embed::pca_2d(planar), planar);
  o.check(distortion < 1e-9, "PCA distortion " + fmt(distortion));

  const auto clusters = oracle::two_clusters(20, 50, 12, 5);
  const double pca_purity = oracle::two_means_purity(embed::project_2d(clusters.vectors).points, clusters.labels);
  embed::ProjectionConfig ucfg;
  ucfg.method = embed::Method::umap;
  ucfg.seed = 7;
  const double umap_purity = oracle::two_means_purity(embed::project_2d(clusters.vectors, ucfg).points, clusters.labels);
  o.check(pca_purity == 1.0, "PCA purity " + fmt(pca_purity));
  o.check(umap_purity == 1.0, "UMAP purity " + fmt(umap_purity));

  // Full layer over the 81 golden-area centers.
  const auto store = service::ingest({{oracle::fixture("fatih_golden.osm")}, {}});
  std::vector<embed::LayerInput> inputs;
  for (const auto& c : cli::read_centers(oracle::fixture("centers81.csv")))
    inputs.push_back({c.id, c.location, render_preprompt(build_descriptor(store.features, c.location))});
  const auto layer = embed::build_layer(lex, inputs, ucfg);
  const auto doc = json::parse(embed::emit_geojson(layer.points));
  const auto violations = oracle::geojson_violations(doc);
  o.check(violations.empty(), "GeoJSON violations: " + (violations.empty() ? std::string() : violations.front()));
  o.check(doc["features"].size() == inputs.size(), "feature count " + std::to_string(doc["features"].size()));
  for (std::size_t i = 0; i < std::min(inputs.size(), doc["features"].size()); ++i) {
    const auto& c = doc["features"][i]["geometry"]["coordinates"];
    o.check(c[0].get<double>() == inputs[i].location.lon && c[1].get<double>() == inputs[i].location.lat,
            "coordinates not lon-lat for " + inputs[i].preprompt_id);
  }
  o.note("PCA distortion " + fmt(distortion) + ", purity " + fmt(pca_purity) + "/" + fmt(umap_purity) + ", " +
         std::to_string(doc["features"].size()) + " features");
  return o;
}

// Upstream completion double recording prompts.
struct Upstream {
  test_support::MockServer server;
  std::mutex mu;
  std::vector<std::string> prompts;
  std::atomic<int> status{200};

  Upstream() {
    server.http().Post("/v1/completions", [this](const httplib::Request& q, httplib::Response& r) {
      {
        std::lock_guard lock(mu);
        prompts.push_back(json::parse(q.body)["prompt"].get<std::string>());
      }
      if (status != 200) {
        r.status = status;
        r.set_content(R"({"error":"boom"})", "application/json");
        return;
      }
      r.set_content(json{{"choices", {{{"text", "Mostly residential."}}}}}.dump(), "application/json");
    });
    server.start();
  }
};

Outcome service_contract() {
  Outcome o;
  const std::string dir = temp_dir("service");
  const auto store = std::make_shared<const service::FeatureStore>(service::ingest({{oracle::fixture("fatih_golden.osm")}, {}}));
  service::save_store(*store, dir + "/store.json");

  Upstream up;
  service::CompletionEndpoint ep;
  ep.url = up.server.url("/v1/completions");
  ep.model = "area-lm";
  ep.token_env = "";
  ep.timeout = std::chrono::seconds(10);
  std::ostringstream log;
  service::Service svc(store, {}, std::make_shared<service::HttpCompletionClient>(ep), std::make_shared<service::JsonLogger>(&log));
  httplib::Server srv;
  svc.mount(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);

  const auto described = run_cli("describe --store '" + dir + "/store.json' --lat 41.0115 --lon 28.9560");
  const auto res = client.Get("/v1/preprompt?lat=41.0115&lon=28.9560");
  o.check(described.code == 0, "describe exited " + std::to_string(described.code));
  o.check(res && res->status == 200 && described.out == res->body + "\n", "GET /v1/preprompt differs from describe");

  const auto ask = [&](double lat, double lon, const std::string& q) {
    return client.Post("/v1/ask", json{{"lat", lat}, {"lon", lon}, {"question", q}}.dump(), "application/json");
  };
  const auto ok = ask(41.0115, 28.9560, "Is it touristic?");
  o.check(ok && ok->status == 200, "ask failed");
  {
    std::lock_guard lock(up.mu);
    const std::string suffix = " Answer :";
    const bool ends = up.prompts.size() == 1 && up.prompts[0].size() >= suffix.size() &&
                      up.prompts[0].compare(up.prompts[0].size() - suffix.size(), suffix.size(), suffix) == 0;
    o.check(ends, "upstream prompt does not end with ' Answer :'");
  }

  const auto status_of = [](const httplib::Result& r) { return r ? r->status : -1; };
  o.check(status_of(client.Get("/v1/preprompt?lat=999&lon=28.956")) == 400, "invalid lat not 400");
  o.check(status_of(ask(41.0115, 28.956, "   ")) == 400, "empty question not 400");
  o.check(status_of(client.Get("/v1/preprompt?lat=48.0&lon=2.0")) == 422, "outside store not 422");
  up.status = 500;
  const auto bad = ask(41.0115, 28.956, "Is it touristic?");
  o.check(status_of(bad) == 502, "upstream 500 not 502");

  srv.stop();
  th.join();
  fs::remove_all(dir);
  o.note("describe == GET, ask prompt suffix, 400/422/502");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"golden preprompt reproduction", golden_preprompt},
      {"geometry accuracy", geometry},
      {"projection fidelity", projection},
      {"curation pipeline", curation},
      {"embedding properties", embedding},
      {"service contract", service_contract},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    if (o.failures.empty()) {
      std::cout << "PASS " << name;
      if (!o.notes.empty()) std::cout << " (" << o.notes.front() << ")";
      std::cout << "\n";
    } else {
      ++failed;
      std::cout << "FAIL " << name << ": " << o.failures.front();
      if (o.failures.size() > 1) std::cout << " (+" << o.failures.size() - 1 << " more)";
      std::cout << "\n";
    }
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
