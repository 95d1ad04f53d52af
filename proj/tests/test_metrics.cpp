#include <doctest.h>

#include <cmath>
#include <random>

#include "modeldx/metrics.hpp"

using namespace modeldx;

namespace {

std::vector<PredictionRecord> records(std::vector<std::pair<double, bool>> rows, double threshold = 0.5) {
  std::vector<PredictionRecord> out;
  ItemId id = 0;
  for (auto [s, y] : rows) out.push_back({id++, s, s > threshold, y});
  return out;
}

// Probability that a random positive outscores a random negative, ties half.
double mann_whitney(std::span<const PredictionRecord> preds) {
  double wins = 0;
  std::size_t pairs = 0;
  for (const auto& p : preds) {
    if (!p.label) continue;
    for (const auto& n : preds) {
      if (n.label) continue;
      ++pairs;
      if (p.score > n.score) wins += 1;
      else if (p.score == n.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("confusion counts outcomes") {
  const auto preds = records({{0.9, true}, {0.8, false}, {0.3, false}, {0.2, true}, {0.6, true}});
  const auto m = confusion(preds);
  CHECK(m.tp == 2);
  CHECK(m.fp == 1);
  CHECK(m.tn == 1);
  CHECK(m.fn == 1);
  CHECK(m.accuracy() == doctest::Approx(0.6));
  CHECK(std::isnan(ConfusionMatrix{}.accuracy()));
}

TEST_CASE("small AUC example") {
  const auto preds = records({{0.9, true}, {0.8, true}, {0.7, false}, {0.6, true}, {0.5, false}});
  const auto roc = roc_auc(preds, 0.5);
  CHECK(roc.auc == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(roc.points.front().fpr == 0.0);
  CHECK(roc.points.front().tpr == 0.0);
  CHECK(std::isinf(roc.points.front().threshold));
  CHECK(roc.points.back().fpr == 1.0);
  CHECK(roc.points.back().tpr == 1.0);
  // score > 0.5: 3 of 3 positives, 1 of 2 negatives.
  CHECK(roc.operating_tpr == 1.0);
  CHECK(roc.operating_fpr == 0.5);
}

TEST_CASE("ties take one diagonal step") {
  const auto preds = records({{0.5, true}, {0.5, false}});
  const auto roc = roc_auc(preds, 0.5);
  CHECK(roc.points.size() == 2);
  CHECK(roc.auc == 0.5);
}

TEST_CASE("AUC matches the rank statistic") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> size(2, 300), grid(0, 20);
    std::bernoulli_distribution coin(0.4);
    const int n = size(rng);
    std::vector<std::pair<double, bool>> rows;
    for (int i = 0; i < n; ++i) rows.push_back({grid(rng) / 20.0, coin(rng)});
    rows[0].second = true;
    rows[1].second = false;
    const auto preds = records(rows);
    CHECK(roc_auc(preds, 0.5).auc == doctest::Approx(mann_whitney(preds)).epsilon(1e-12));
  }
}

TEST_CASE("AUC is monotone along the curve and bounded") {
  const auto preds = records({{0.1, false}, {0.4, true}, {0.35, false}, {0.8, true}, {0.8, false}});
  const auto roc = roc_auc(preds, 0.5);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
    CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    CHECK(roc.points[i].threshold < roc.points[i - 1].threshold);
  }
}

TEST_CASE("AUC needs both classes") {
  CHECK_THROWS_AS(roc_auc(records({{0.2, true}, {0.9, true}}), 0.5), UndefinedAuc);
  CHECK_THROWS_AS(roc_auc({}, 0.5), UndefinedAuc);
}

TEST_CASE("histogram bins") {
  const auto preds = records({{0.0, false}, {0.1, true}, {0.55, true}, {0.999, false}, {1.0, true}});
  const auto h = histogram(preds, 10, 0.5);
  REQUIRE(h.bins.size() == 10);
  CHECK(h.bins[0].lo == 0.0);
  CHECK(h.bins[9].hi == 1.0);
  CHECK(h.bins[0].counts.tn == 1);
  CHECK(h.bins[1].counts.fn == 1);
  CHECK(h.bins[5].counts.tp == 1);
  CHECK(h.bins[9].counts.fp == 1);
  CHECK(h.bins[9].counts.tp == 1);
  std::size_t total = 0;
  for (const auto& b : h.bins) total += b.counts.total();
  CHECK(total == preds.size());
  CHECK(h.threshold == 0.5);
  CHECK_THROWS(histogram(preds, 0, 0.5));
}

TEST_CASE("histogram bin edges") {
  // 0.5 belongs to the upper of the two bins meeting there.
  const auto h = histogram(records({{0.5, true}}, 0.4), 2, 0.4);
  CHECK(h.bins[0].counts.total() == 0);
  CHECK(h.bins[1].counts.tp == 1);
}

TEST_CASE("summary payload") {
  const auto train = records({{0.9, true}, {0.2, false}, {0.7, false}});
  const auto test = records({{0.6, true}, {0.6, true}});
  const auto j = summary_json(train, test, 0.5, 4);
  CHECK(j["confusion"]["train"]["tp"] == 1);
  CHECK(j["confusion"]["test"]["tp"] == 2);
  CHECK(j["roc"]["auc_train"].get<double>() == doctest::Approx(1.0));
  CHECK(j["roc"]["auc_test"].is_null());
  CHECK(j["histogram"]["train"]["bins"].size() == 4);
  CHECK(j["accuracy"]["train"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(j["accuracy"]["test"].get<double>() == 1.0);
}
