#include <doctest.h>

#include <cmath>
#include <random>

#include "modeldx/aggregator.hpp"
#include "support.hpp"

using namespace modeldx;
using namespace modeldx::testing;

namespace {

struct Row {
  FeatureSet active;
  bool label;
  double score;
  FeatureSet removed;
};

// Threshold 0.5; every explanation counts as flipped.
std::shared_ptr<const DiagnosticData> make_data(const std::vector<Row>& rows, std::size_t features = 6) {
  std::vector<Item> items;
  std::vector<PredictionRecord> preds;
  std::vector<Explanation> expl;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto id = static_cast<ItemId>(i);
    items.push_back({id, rows[i].active, rows[i].label});
    preds.push_back({id, rows[i].score, rows[i].score > 0.5, rows[i].label});
    expl.push_back({id, rows[i].removed, true, rows[i].score, 1});
  }
  auto ds = std::make_shared<SparseDataset>(named_features(features), std::move(items));
  return std::make_shared<DiagnosticData>(ds, std::move(preds), std::move(expl));
}

std::vector<Row> sample_rows() {
  return {
      {{0, 1}, true, 0.9, {0}},     // 0: tp, {0}
      {{0, 2}, true, 0.8, {0}},     // 1: tp, {0}
      {{0, 3}, false, 0.7, {0}},    // 2: fp, {0}
      {{1, 2}, false, 0.2, {1, 2}}, // 3: tn, {1,2}
      {{1, 2, 4}, true, 0.3, {1, 2}}, // 4: fn, {1,2}
      {{3}, false, 0.1, {3}},       // 5: tn, {3}
      {{5}, false, 0.4, {5}},       // 6: tn, {5}
  };
}

double ci_half_width(const OddsRatio& o) { return (std::log(o.ci_high) - std::log(o.ci_low)) / 2; }

}  // namespace

TEST_CASE("odds ratio arithmetic") {
  const auto o = odds_ratio(30, 10, 50, 50);
  CHECK(o.defined);
  CHECK_FALSE(o.corrected);
  CHECK(o.value == doctest::Approx(3.0).epsilon(1e-12));
  const double se = std::sqrt(1.0 / 30 + 1.0 / 10 + 1.0 / 50 + 1.0 / 50);
  CHECK(o.ci_low == doctest::Approx(std::exp(std::log(3.0) - 1.96 * se)).epsilon(1e-12));
  CHECK(o.ci_high == doctest::Approx(std::exp(std::log(3.0) + 1.96 * se)).epsilon(1e-12));
  CHECK_FALSE(o.uncertain);

  const auto small = odds_ratio(5, 5, 25, 75);
  CHECK(small.value == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(small.uncertain);

  const auto even = odds_ratio(100, 100, 100, 100);
  CHECK(even.value == doctest::Approx(1.0));
  CHECK(even.ci_low == doctest::Approx(0.6757).epsilon(1e-4));
  CHECK(even.ci_high == doctest::Approx(1.4800).epsilon(1e-4));
  CHECK(even.uncertain);
}

TEST_CASE("zero counts get the half correction") {
  const auto o = odds_ratio(0, 10, 50, 50);
  CHECK(o.corrected);
  CHECK(o.defined);
  CHECK(o.value == doctest::Approx((0.5 / 10.5) / (50.5 / 50.5)).epsilon(1e-12));
  CHECK(o.value == doctest::Approx(0.047619).epsilon(1e-5));
  CHECK(std::isfinite(o.ci_low));
  CHECK(std::isfinite(o.ci_high));
}

TEST_CASE("empty complement is undefined") {
  const auto o = odds_ratio(4, 3, 0, 0);
  CHECK_FALSE(o.defined);
  CHECK(o.uncertain);
  CHECK(std::isnan(o.value));
  CHECK(std::isnan(uncertainty(o)));
}

TEST_CASE("uncertainty is minus the absolute log ratio") {
  CHECK(uncertainty(3.0) == doctest::Approx(-1.0986).epsilon(1e-4));
  CHECK(uncertainty(1.0 / 3.0) == doctest::Approx(-1.0986).epsilon(1e-4));
  CHECK(uncertainty(1.0) == 0.0);
}

TEST_CASE("interval narrows with the square root of sample size") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> count(1, 60);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t a = count(rng), b = count(rng), c = count(rng), d = count(rng);
    const auto base = odds_ratio(a, b, c, d);
    for (std::size_t k : {2u, 4u, 9u}) {
      const auto scaled = odds_ratio(k * a, k * b, k * c, k * d);
      CHECK(scaled.value == doctest::Approx(base.value).epsilon(1e-12));
      CHECK(ci_half_width(scaled) == doctest::Approx(ci_half_width(base) / std::sqrt(double(k))).epsilon(1e-9));
    }
    CHECK(base.ci_low <= base.value);
    CHECK(base.value <= base.ci_high);
    CHECK(base.uncertain == (base.ci_low <= 1.0 && 1.0 <= base.ci_high));
  }
}

TEST_CASE("grouping by explanation") {
  auto data = make_data(sample_rows());
  const auto groups = group_explanations(*data, data->all_items());
  REQUIRE(groups.size() == 4);
  CHECK(groups[0].key == FeatureSet{0});
  CHECK(groups[0].items == std::vector<ItemId>{0, 1, 2});
  CHECK(groups[0].counts.tp == 2);
  CHECK(groups[0].counts.fp == 1);
  CHECK(groups[1].key == FeatureSet{1, 2});
  CHECK(groups[1].counts.tn == 1);
  CHECK(groups[1].counts.fn == 1);
  // {0}: 2 pos / 1 neg inside; 1 pos / 3 neg outside; {3} has a zero count.
  CHECK(groups[0].odds.value == doctest::Approx((2.0 / 1.0) / (1.0 / 3.0)));
  CHECK(groups[2].odds.corrected);

  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  CHECK(total == data->all_items().size());
}

TEST_CASE("items must have explanations") {
  auto ds = std::make_shared<SparseDataset>(named_features(6), std::vector<Item>{{0, {0}, true}, {1, {1}, false}});
  std::vector<PredictionRecord> preds{{0, 0.9, true, true}, {1, 0.1, false, false}};
  DiagnosticData data(ds, preds, {{0, {0}, true, 0.9, 1}});
  CHECK(data.explanation(1) == nullptr);
  const std::vector<ItemId> both{0, 1};
  CHECK_THROWS_AS(group_explanations(data, both), IntegrityError);
  CHECK_THROWS_AS(DiagnosticData(ds, {preds[0]}, {}), IntegrityError);
  CHECK_THROWS_AS(DiagnosticData(ds, preds, {{0, {3}, true, 0.9, 1}}), IntegrityError);
}

TEST_CASE("sorting") {
  auto data = make_data(sample_rows());
  auto groups = group_explanations(*data, data->all_items());
  const std::vector<SortKey> by_total{{GroupMetric::total, SortDirection::descending}};
  sort_groups(groups, by_total, data->dataset());
  CHECK(groups[0].key == FeatureSet{0});
  CHECK(groups[1].key == FeatureSet{1, 2});
  // Ties on size fall back to the key.
  CHECK(groups[2].key == FeatureSet{3});
  CHECK(groups[3].key == FeatureSet{5});

  const std::vector<SortKey> by_name{{GroupMetric::lexicographic, SortDirection::descending}};
  sort_groups(groups, by_name, data->dataset());
  CHECK(groups[0].key == FeatureSet{5});
  CHECK(groups[3].key == FeatureSet{0});

  const std::vector<SortKey> two{{GroupMetric::incorrect_count, SortDirection::descending},
                                 {GroupMetric::positive_truth, SortDirection::ascending}};
  sort_groups(groups, two, data->dataset());
  CHECK(groups[0].key == FeatureSet{1, 2});
  CHECK(groups[1].key == FeatureSet{0});
}

TEST_CASE("undefined odds ratios sort last either way") {
  auto data = make_data({{{0}, true, 0.9, {0}}, {{0, 1}, false, 0.9, {0}}});
  auto groups = group_explanations(*data, data->all_items());
  REQUIRE(groups.size() == 1);
  CHECK_FALSE(groups[0].odds.defined);

  auto mixed = make_data(sample_rows());
  auto many = group_explanations(*mixed, mixed->all_items());
  many.push_back(groups[0]);
  many.back().key = {4};
  for (auto dir : {SortDirection::ascending, SortDirection::descending}) {
    for (auto metric : {GroupMetric::odds_ratio, GroupMetric::uncertainty}) {
      const std::vector<SortKey> spec{{metric, dir}};
      sort_groups(many, spec, mixed->dataset());
      CHECK(many.back().key == FeatureSet{4});
    }
  }
}

TEST_CASE("metric names") {
  for (auto m : {GroupMetric::total, GroupMetric::positive_truth, GroupMetric::predicted_positive,
                 GroupMetric::incorrect_count, GroupMetric::odds_ratio, GroupMetric::uncertainty,
                 GroupMetric::lexicographic})
    CHECK(parse_metric(to_string(m)) == m);
  CHECK_THROWS_AS(parse_metric("size"), FilterError);
}

TEST_CASE("filters") {
  auto data = make_data(sample_rows());
  const auto& all = data->all_items();

  CHECK(apply_filter(*data, all, ScoreRangeFilter{0.3, 0.8}) == std::vector<ItemId>{1, 2, 4, 6});
  CHECK(apply_filter(*data, all, ScoreRangeFilter{0.95, 1.0}).empty());
  CHECK_THROWS_AS(apply_filter(*data, all, ScoreRangeFilter{0.8, 0.3}), FilterError);

  CHECK(apply_filter(*data, all, GroupSelectionFilter{{{3}, {1, 2}}}) == std::vector<ItemId>{3, 4, 5});
  CHECK_THROWS_AS(apply_filter(*data, all, GroupSelectionFilter{{{4}}}), FilterError);

  CHECK(apply_filter(*data, all, parse_search("f2")) == std::vector<ItemId>{3, 4});
  CHECK(apply_filter(*data, all, parse_search(" f1 , f2 ")) == std::vector<ItemId>{3, 4});
  CHECK(apply_filter(*data, all, parse_search("f1,f0")).empty());
  CHECK_THROWS_AS(apply_filter(*data, all, parse_search("nope")), FilterError);
  CHECK_THROWS_AS(parse_search(" , "), FilterError);

  CHECK(apply_filter(*data, all, ConditionFilter{GroupMetric::total, Comparison::greater_equal, 2}) ==
        std::vector<ItemId>{0, 1, 2, 3, 4});
  CHECK(apply_filter(*data, all, ConditionFilter{GroupMetric::incorrect_count, Comparison::equal, 0}) ==
        std::vector<ItemId>{5, 6});
  CHECK_THROWS_AS(apply_filter(*data, all, ConditionFilter{GroupMetric::lexicographic, Comparison::equal, 0}),
                  FilterError);
}

TEST_CASE("odds ratios are relative to the current items") {
  auto data = make_data(sample_rows());
  const auto subset = apply_filter(*data, data->all_items(), ScoreRangeFilter{0.0, 0.5});
  const auto groups = group_explanations(*data, subset);
  // Items 3..6: {1,2} has 1 pos / 1 neg, the rest 0 pos / 2 neg.
  REQUIRE(groups.front().key == FeatureSet{1, 2});
  CHECK(groups.front().odds.corrected);
  CHECK(groups.front().odds.value == doctest::Approx((1.5 / 1.5) / (0.5 / 2.5)));
}

TEST_CASE("filter stack") {
  auto data = make_data(sample_rows());
  SessionState session(data);
  CHECK(session.depth() == 0);
  CHECK(session.current().size() == 7);
  session.push(ScoreRangeFilter{0.5, 1.0});
  session.push(ConditionFilter{GroupMetric::total, Comparison::greater, 1});
  CHECK(session.depth() == 2);
  CHECK(session.current() == std::vector<ItemId>{0, 1, 2});
  session.push(parse_search("f4"));
  CHECK(session.current().empty());
  CHECK(session.groups().empty());
  session.pop_to(1);
  CHECK(session.current() == std::vector<ItemId>{0, 1, 2});
  CHECK_THROWS_AS(session.pop_to(2), FilterError);
  session.pop_to(0);
  CHECK(session.current() == data->all_items());
}

TEST_CASE("filter json round-trip") {
  const std::vector<Filter> filters{ScoreRangeFilter{0.25, 0.75}, GroupSelectionFilter{{{1, 2}, {}}},
                                    SearchFilter{{"a", "b"}},
                                    ConditionFilter{GroupMetric::odds_ratio, Comparison::less_equal, 2.5}};
  for (const auto& f : filters) CHECK(to_json(filter_from_json(to_json(f))) == to_json(f));

  const auto q = filter_from_json({{"type", "search"}, {"query", "x, y"}});
  CHECK(std::get<SearchFilter>(q).features == std::vector<std::string>{"x", "y"});
  const auto sel = filter_from_json({{"type", "select"}, {"keys", {{3, 1, 3}}}});
  CHECK(std::get<GroupSelectionFilter>(sel).keys[0] == FeatureSet{1, 3});
  CHECK_THROWS_AS(filter_from_json({{"type", "magic"}}), FilterError);
  CHECK_THROWS_AS(filter_from_json({{"type", "score_range"}}), FilterError);
  CHECK_THROWS_AS(filter_from_json({{"type", "condition"}, {"metric", "total"}, {"op", "~"}, {"value", 1}}),
                  FilterError);
}

TEST_CASE("group json") {
  auto data = make_data(sample_rows());
  const auto groups = group_explanations(*data, data->all_items());
  const auto j = to_json(groups[1], data->dataset());
  CHECK(j["key"] == nlohmann::json::array({1, 2}));
  CHECK(j["names"] == nlohmann::json::array({"f1", "f2"}));
  CHECK(j["size"] == 2);
  CHECK(j["counts"]["fn"] == 1);
  CHECK(j["ci"].size() == 2);

  auto single = make_data({{{0}, true, 0.9, {0}}});
  const auto lone = group_explanations(*single, single->all_items());
  CHECK(to_json(lone[0], single->dataset())["or"].is_null());
}
