#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "modeldx/bridge.hpp"
#include "modeldx/explainer.hpp"

using namespace modeldx;
using namespace std::chrono_literals;

namespace {

std::string fixture(const std::string& args) {
  return "python3 " MODELDX_FIXTURES "/bridge_model.py " + args;
}

BridgeConfig process(const std::string& args) {
  BridgeConfig c;
  c.command = fixture(args);
  c.timeout = 5000ms;
  return c;
}

// Scores each set as min(1, size / 10) behind POST /score.
class ScoreServer {
 public:
  ScoreServer() {
    server_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const auto j = nlohmann::json::parse(req.body);
      nlohmann::json scores = nlohmann::json::array();
      for (const auto& items : j.at("items")) scores.push_back(std::min(1.0, items.size() / 10.0));
      res.set_content(nlohmann::json{{"id", j.at("id")}, {"scores", scores}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScoreServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_.load(); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
};

}  // namespace

TEST_CASE("subprocess bridge scores items") {
  ExternalModel half(process("half"));
  CHECK(half.score(FeatureSet{1, 2}) == 0.5);

  ExternalModel count(process("count"));
  const std::vector<FeatureSet> sets{{1, 2}, {}, {0, 1, 2, 3, 4}};
  const auto scores = count.score_batch(sets);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == doctest::Approx(0.2));
  CHECK(scores[1] == 0.0);
  CHECK(scores[2] == doctest::Approx(0.5));
}

TEST_CASE("batches are split at max_batch") {
  auto cfg = process("count");
  cfg.max_batch = 4;
  ExternalModel model(cfg);
  std::vector<FeatureSet> sets;
  for (FeatureIndex i = 0; i < 10; ++i) sets.push_back(FeatureSet(i, 0));
  for (auto& s : sets)
    for (FeatureIndex j = 0; j < s.size(); ++j) s[j] = j;
  const auto scores = model.score_batch(sets);
  REQUIRE(scores.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(scores[i] == doctest::Approx(i / 10.0));
  CHECK(model.requests_sent() == 3);
}

TEST_CASE("out-of-range scores are rejected") {
  auto cfg = process("range");
  cfg.attempts = 2;
  ExternalModel model(cfg);
  try {
    model.score(FeatureSet{0});
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("outside [0, 1]") != std::string::npos);
    CHECK(std::string(e.what()).find("after 2 attempts") != std::string::npos);
  }
}

TEST_CASE("wrong score count is rejected") {
  ExternalModel model(process("short"));
  CHECK_THROWS_AS(model.score_batch(std::vector<FeatureSet>{{0}, {1}}), ModelError);
}

TEST_CASE("responses with another id are skipped") {
  ExternalModel model(process("stale"));
  CHECK(model.score(FeatureSet{0, 1, 2}) == doctest::Approx(0.3));
  CHECK(model.score(FeatureSet{0}) == doctest::Approx(0.1));
}

TEST_CASE("a crashed process is restarted") {
  const auto state = std::filesystem::temp_directory_path() /
                     ("modeldx_crash_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  std::filesystem::remove(state);
  ExternalModel model(process("crash-once " + state.string()));
  CHECK(model.score(FeatureSet{0, 1}) == doctest::Approx(0.2));
  CHECK(model.requests_sent() == 2);
  std::filesystem::remove(state);
}

TEST_CASE("timeouts are retried then reported") {
  auto cfg = process("hang");
  cfg.timeout = 200ms;
  cfg.attempts = 3;
  ExternalModel model(cfg);
  const auto start = std::chrono::steady_clock::now();
  CHECK_THROWS_WITH_AS(model.score(FeatureSet{0}), doctest::Contains("timed out"), ModelError);
  CHECK(std::chrono::steady_clock::now() - start >= 600ms);
  CHECK(model.requests_sent() == 3);
}

TEST_CASE("missing executable fails cleanly") {
  BridgeConfig cfg;
  cfg.command = "/nonexistent/modeldx-model";
  cfg.timeout = 1000ms;
  ExternalModel model(cfg);
  CHECK_THROWS_AS(model.score(FeatureSet{}), ModelError);
}

TEST_CASE("configuration is validated") {
  CHECK_THROWS_AS(ExternalModel(BridgeConfig{}), ModelError);
  BridgeConfig both;
  both.command = "cat";
  both.url = "http://127.0.0.1:1";
  CHECK_THROWS_AS(ExternalModel{both}, ModelError);
  BridgeConfig zero;
  zero.command = "cat";
  zero.max_batch = 0;
  CHECK_THROWS_AS(ExternalModel{zero}, ModelError);
}

TEST_CASE("http bridge") {
  ScoreServer server;
  BridgeConfig cfg;
  cfg.url = server.url();
  cfg.connections = 2;
  ExternalModel model(cfg);
  const auto scores = model.score_batch(std::vector<FeatureSet>{{1}, {1, 2, 3}});
  CHECK(scores[0] == doctest::Approx(0.1));
  CHECK(scores[1] == doctest::Approx(0.3));
  CHECK(server.requests() == 1);
  CHECK(model.parameters()["url"] == server.url());
}

TEST_CASE("unreachable http bridge") {
  BridgeConfig cfg;
  {
    ScoreServer gone;
    cfg.url = gone.url();
  }
  cfg.timeout = 500ms;
  ExternalModel model(cfg);
  CHECK_THROWS_AS(model.score(FeatureSet{}), ModelError);
}

TEST_CASE("explaining through a bridge matches the in-process model") {
  auto cfg = process("count");
  cfg.connections = 2;
  auto bridged = connect_external_model(cfg, 8);
  bridged.threshold = 0.25;
  ScoredModel local;
  local.predictor = std::make_shared<FunctionModel>([](FeatureView v) { return std::min(1.0, v.size() / 10.0); });
  local.threshold = 0.25;
  local.num_features = 8;

  std::vector<Item> items;
  for (ItemId i = 0; i < 12; ++i) {
    Item it{i, {}, i % 2 == 0};
    for (FeatureIndex f = 0; f < 8; ++f)
      if ((i + f) % 3 != 0) it.active.push_back(f);
    items.push_back(it);
  }
  std::vector<Feature> features;
  for (FeatureIndex f = 0; f < 8; ++f) features.push_back({f, "x" + std::to_string(f)});
  SparseDataset data(features, items);
  ExplainConfig ec;
  ec.parallelism = 4;
  const auto a = explain_all(bridged, data, ec);
  const auto b = explain_all(local, data, ec);
  CHECK(a.failures.empty());
  CHECK(a.explanations == b.explanations);
}

TEST_CASE("bridge parameters round-trip") {
  auto cfg = process("half");
  cfg.max_batch = 7;
  auto model = bridge_from_parameters(ExternalModel(cfg).parameters());
  CHECK(model->config().command == cfg.command);
  CHECK(model->config().max_batch == 7);
  CHECK(model->score(FeatureSet{}) == 0.5);
}
