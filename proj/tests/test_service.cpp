#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "modeldx/service.hpp"
#include "modeldx/trainers.hpp"
#include "support.hpp"

using namespace modeldx;
using namespace modeldx::testing;

namespace {

struct Fixture {
  Service service;
  SparseDataset dataset;
  ScoredModel model;
  std::vector<Explanation> explanations;

  Fixture() {
    dataset = split_dataset(random_dataset(240, 10, 0.3, 4), 0.25, 1);
    model = train_logistic(dataset, LogisticConfig{});
    ExplainConfig cfg;
    cfg.seed = 2;
    auto run = explain_all(model, dataset, cfg);
    explanations = run.explanations;
    service.add_dataset("d", dataset);
    service.add_model("m", model);
    service.add_run("r", run.explanations, make_manifest(model, dataset, cfg, run));

    auto other = logistic_model(std::vector<double>(10, 0.5), -1.0);
    service.add_model("other", other);
  }

  ApiResponse get(const std::string& path, QueryParams q = {}) { return service.handle("GET", path, q, ""); }
  ApiResponse post(const std::string& path, const nlohmann::json& body) {
    return service.handle("POST", path, {}, body.dump());
  }
  std::string open() {
    const auto r = post("/sessions", {{"dataset", "d"}, {"model", "m"}, {"run", "r"}});
    REQUIRE(r.status == 200);
    return r.body["session"];
  }
};

}  // namespace

TEST_CASE("catalog listings") {
  Fixture f;
  const auto d = f.get("/datasets");
  REQUIRE(d.status == 200);
  CHECK(d.body[0]["items"] == 240);
  CHECK(d.body[0]["test_items"] == 180);
  CHECK(f.get("/models").body.size() == 2);
  CHECK(f.get("/runs").body[0]["manifest"]["seed"] == 2);
  CHECK(f.get("/nothing").status == 404);
}

TEST_CASE("session creation") {
  Fixture f;
  const auto ok = f.post("/sessions", {{"dataset", "d"}, {"model", "m"}, {"run", "r"}});
  CHECK(ok.status == 200);
  CHECK(ok.body["session"].get<std::string>().size() == 32);
  CHECK(ok.body["items"] == 240);

  CHECK(f.post("/sessions", {{"dataset", "x"}, {"model", "m"}, {"run", "r"}}).status == 404);
  CHECK(f.post("/sessions", {{"dataset", "d"}, {"model", "m"}, {"run", "x"}}).status == 404);
  const auto stale = f.post("/sessions", {{"dataset", "d"}, {"model", "other"}, {"run", "r"}});
  CHECK(stale.status == 409);
  CHECK(stale.body["code"] == "conflict");
  CHECK(f.service.handle("POST", "/sessions", {}, "{nope").status == 400);
  CHECK(f.service.session_count() == 1);
}

TEST_CASE("unknown sessions are unauthorized") {
  Fixture f;
  CHECK(f.get("/sessions/deadbeef/summary").status == 401);
  CHECK(f.post("/sessions/deadbeef/filters", {{"type", "score_range"}, {"lo", 0}, {"hi", 1}}).status == 401);
}

TEST_CASE("summary is stable") {
  Fixture f;
  const auto s = f.open();
  const auto a = f.get("/sessions/" + s + "/summary");
  const auto b = f.get("/sessions/" + s + "/summary");
  REQUIRE(a.status == 200);
  CHECK(a.body == b.body);
  CHECK(a.body["confusion"]["test"]["total"] == 180);
  CHECK(a.body["roc"]["threshold"] == f.model.threshold);
}

TEST_CASE("score range filter and pop") {
  Fixture f;
  const auto s = f.open();
  const auto base = "/sessions/" + s;
  const auto pushed = f.post(base + "/filters", {{"type", "score_range"}, {"lo", f.model.threshold}, {"hi", 1.0}});
  REQUIRE(pushed.status == 200);
  CHECK(pushed.body["depth"] == 1);

  const auto expected = predict_all(f.model, f.dataset);
  std::size_t in_range = 0;
  for (const auto& p : expected) in_range += p.score >= f.model.threshold ? 1 : 0;
  CHECK(pushed.body["stack"][1]["size"] == in_range);

  const auto groups = f.get(base + "/groups", {{"page_size", "1000"}});
  REQUIRE(groups.status == 200);
  CHECK(groups.body["current"]["size"] == in_range);
  std::size_t sum = 0;
  for (const auto& g : groups.body["groups"]) sum += g["size"].get<std::size_t>();
  CHECK(sum == in_range);

  const auto popped = f.post(base + "/filters/pop", {{"depth", 0}});
  CHECK(popped.body["depth"] == 0);
  CHECK(f.get(base + "/groups").body["current"]["size"] == 240);
  CHECK(f.post(base + "/filters/pop", {{"depth", 3}}).status == 400);
  CHECK(f.post(base + "/filters/pop", {{"depth", -1}}).status == 400);
}

TEST_CASE("bad filters are rejected without changing the stack") {
  Fixture f;
  const auto base = "/sessions/" + f.open();
  CHECK(f.post(base + "/filters", {{"type", "search"}, {"query", "no_such_feature"}}).status == 400);
  CHECK(f.post(base + "/filters", {{"type", "score_range"}, {"lo", 0.9}, {"hi", 0.1}}).status == 400);
  CHECK(f.get(base + "/filters").body["depth"] == 0);
}

TEST_CASE("group listing: sorting and paging") {
  Fixture f;
  const auto base = "/sessions/" + f.open();
  const auto all = f.get(base + "/groups", {{"page_size", "1000"}});
  const auto total = all.body["total_groups"].get<std::size_t>();
  REQUIRE(total > 3);
  for (std::size_t i = 1; i < total; ++i) CHECK(all.body["groups"][i - 1]["size"] >= all.body["groups"][i]["size"]);

  const auto page = f.get(base + "/groups", {{"page", "1"}, {"page_size", "2"}});
  CHECK(page.body["groups"].size() == 2);
  CHECK(page.body["groups"][0] == all.body["groups"][2]);

  const auto asc = f.get(base + "/groups", {{"sort", "odds_ratio,total"}, {"dir", "asc,desc"}, {"page_size", "1000"}});
  REQUIRE(asc.status == 200);
  CHECK(asc.body["sort"][0]["metric"] == "odds_ratio");
  CHECK(asc.body["sort"][0]["dir"] == "asc");
  double prev = -1;
  for (const auto& g : asc.body["groups"]) {
    if (g["or"].is_null()) continue;
    CHECK(g["or"].get<double>() >= prev);
    prev = g["or"].get<double>();
  }
  CHECK(f.get(base + "/groups", {{"sort", "bogus"}}).status == 400);
  CHECK(f.get(base + "/groups", {{"dir", "sideways"}, {"sort", "total"}}).status == 400);
  CHECK(f.get(base + "/groups", {{"page_size", "0"}}).status == 400);
}

TEST_CASE("group matrix") {
  Fixture f;
  const auto base = "/sessions/" + f.open();
  const auto groups = f.get(base + "/groups", {{"page_size", "1000"}});
  for (const auto& g : groups.body["groups"]) {
    std::string key;
    for (const auto& k : g["key"]) key += (key.empty() ? "" : ",") + std::to_string(k.get<int>());
    if (key.empty()) key = "-";
    const auto m = f.get(base + "/groups/" + key + "/matrix", {{"rows", "count"}, {"cols", "frequency"}});
    REQUIRE(m.status == 200);
    std::size_t rows = 0;
    for (const auto& r : m.body["rows"]) rows += r["count"].get<std::size_t>();
    CHECK(rows == g["size"].get<std::size_t>());
  }
  CHECK(f.get(base + "/groups/9,8,7,6/matrix").status == 404);
  CHECK(f.get(base + "/groups/abc/matrix").status == 400);
  const auto first = groups.body["groups"][0]["key"];
  std::string key = first.empty() ? "-" : std::to_string(first[0].get<int>());
  for (std::size_t i = 1; i < first.size(); ++i) key += "," + std::to_string(first[i].get<int>());
  CHECK(f.get(base + "/groups/" + key + "/matrix", {{"rows", "diagonal"}}).status == 400);
  const auto hidden = f.get(base + "/groups/" + key + "/matrix", {{"hide", "0"}});
  REQUIRE(hidden.status == 200);
  for (const auto& c : hidden.body["columns"])
    CHECK(c["hidden"].get<bool>() == (c["importance"].get<double>() <= 0.0));
}

TEST_CASE("sessions are isolated") {
  Fixture f;
  const auto a = "/sessions/" + f.open();
  const auto b = "/sessions/" + f.open();
  f.post(a + "/filters", {{"type", "score_range"}, {"lo", 0.99}, {"hi", 1.0}});
  CHECK(f.get(a + "/filters").body["depth"] == 1);
  CHECK(f.get(b + "/filters").body["depth"] == 0);
  CHECK(f.get(b + "/groups").body["current"]["size"] == 240);
  CHECK(f.service.session_count() == 2);
}

TEST_CASE("concurrent sessions") {
  Fixture f;
  std::vector<std::string> tokens;
  for (int i = 0; i < 4; ++i) tokens.push_back("/sessions/" + f.open());
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&, i] {
      for (int k = 0; k < 20; ++k) {
        const double lo = (k % 5) / 5.0;
        if (f.post(tokens[i] + "/filters", {{"type", "score_range"}, {"lo", lo}, {"hi", 1.0}}).status != 200) ++failures;
        if (f.get(tokens[i] + "/groups").status != 200) ++failures;
        if (f.post(tokens[i] + "/filters/pop", {{"depth", 0}}).status != 200) ++failures;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(failures == 0);
}

TEST_CASE("http loopback") {
  Fixture f;
  HttpFrontend http(f.service);
  const int port = http.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { http.run(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 50; ++i) {
    if (client.Get("/datasets")) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  const auto created = client.Post("/sessions", R"({"dataset":"d","model":"m","run":"r"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 200);
  const auto token = nlohmann::json::parse(created->body)["session"].get<std::string>();
  const auto groups = client.Get("/sessions/" + token + "/groups?sort=incorrect_count&dir=desc&page_size=3");
  REQUIRE(groups);
  CHECK(groups->status == 200);
  CHECK(nlohmann::json::parse(groups->body)["groups"].size() <= 3);
  const auto denied = client.Get("/sessions/nope/summary");
  REQUIRE(denied);
  CHECK(denied->status == 401);
  http.stop();
  server.join();
}
