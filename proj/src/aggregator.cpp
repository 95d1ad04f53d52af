#include "modeldx/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace modeldx {

OddsRatio odds_ratio(std::size_t pos_group, std::size_t neg_group, std::size_t pos_rest, std::size_t neg_rest,
                     double z) {
  OddsRatio r;
  if (pos_rest + neg_rest == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.value = r.ci_low = r.ci_high = nan;
    r.uncertain = true;
    r.defined = false;
    return r;
  }
  double pe = static_cast<double>(pos_group), ne = static_cast<double>(neg_group);
  double pt = static_cast<double>(pos_rest), nt = static_cast<double>(neg_rest);
  if (pos_group == 0 || neg_group == 0 || pos_rest == 0 || neg_rest == 0) {
    pe += 0.5;
    ne += 0.5;
    pt += 0.5;
    nt += 0.5;
    r.corrected = true;
  }
  r.defined = true;
  r.value = (pe / ne) / (pt / nt);
  const double half_width = z * std::sqrt(1.0 / pe + 1.0 / ne + 1.0 / pt + 1.0 / nt);
  const double log_or = std::log(r.value);
  r.ci_low = std::exp(log_or - half_width);
  r.ci_high = std::exp(log_or + half_width);
  r.uncertain = r.ci_low <= 1.0 && 1.0 <= r.ci_high;
  return r;
}

double uncertainty(double odds_ratio) { return -std::abs(std::log(odds_ratio)); }

double uncertainty(const OddsRatio& odds) {
  return odds.defined ? uncertainty(odds.value) : std::numeric_limits<double>::quiet_NaN();
}

DiagnosticData::DiagnosticData(std::shared_ptr<const SparseDataset> dataset, std::vector<PredictionRecord> predictions,
                               std::vector<Explanation> explanations)
    : dataset_(std::move(dataset)), predictions_(std::move(predictions)), explanations_(std::move(explanations)) {
  for (std::size_t i = 0; i < predictions_.size(); ++i) {
    if (!dataset_->find(predictions_[i].item))
      throw IntegrityError("prediction for unknown item " + std::to_string(predictions_[i].item));
    if (!prediction_at_.emplace(predictions_[i].item, i).second)
      throw IntegrityError("duplicate prediction for item " + std::to_string(predictions_[i].item));
  }
  for (const auto& item : dataset_->items()) {
    if (!prediction_at_.count(item.id)) throw IntegrityError("item " + std::to_string(item.id) + " has no prediction");
    all_items_.push_back(item.id);
  }
  std::sort(all_items_.begin(), all_items_.end());
  for (std::size_t i = 0; i < explanations_.size(); ++i) {
    const auto& e = explanations_[i];
    const auto* item = dataset_->find(e.item);
    if (!item) throw IntegrityError("explanation for unknown item " + std::to_string(e.item));
    if (!std::includes(item->active.begin(), item->active.end(), e.removed.begin(), e.removed.end()))
      throw IntegrityError("explanation of item " + std::to_string(e.item) + " removes inactive features");
    if (!explanation_at_.emplace(e.item, i).second)
      throw IntegrityError("duplicate explanation for item " + std::to_string(e.item));
  }
}

const PredictionRecord& DiagnosticData::prediction(ItemId id) const {
  auto it = prediction_at_.find(id);
  if (it == prediction_at_.end()) throw IntegrityError("item " + std::to_string(id) + " has no prediction");
  return predictions_[it->second];
}

const Explanation* DiagnosticData::explanation(ItemId id) const {
  auto it = explanation_at_.find(id);
  return it == explanation_at_.end() ? nullptr : &explanations_[it->second];
}

std::vector<ExplanationGroup> group_explanations(const DiagnosticData& data, std::span<const ItemId> items) {
  std::map<FeatureSet, ExplanationGroup> by_key;
  std::size_t positives = 0;
  for (auto id : items) {
    const auto* e = data.explanation(id);
    if (!e) throw IntegrityError("item " + std::to_string(id) + " has no explanation");
    const auto& p = data.prediction(id);
    auto& g = by_key[e->removed];
    g.items.push_back(id);
    g.counts.add(p.outcome());
    positives += p.label ? 1 : 0;
  }
  const std::size_t negatives = items.size() - positives;

  std::vector<ExplanationGroup> groups;
  groups.reserve(by_key.size());
  for (auto& [key, g] : by_key) {
    g.key = key;
    std::sort(g.items.begin(), g.items.end());
    const auto pe = g.counts.actual_positive(), ne = g.counts.actual_negative();
    g.odds = odds_ratio(pe, ne, positives - pe, negatives - ne);
    groups.push_back(std::move(g));
  }
  return groups;
}

namespace {

struct MetricName {
  GroupMetric metric;
  const char* name;
};
constexpr MetricName kMetricNames[] = {
    {GroupMetric::total, "total"},
    {GroupMetric::positive_truth, "positive_truth"},
    {GroupMetric::predicted_positive, "predicted_positive"},
    {GroupMetric::incorrect_count, "incorrect_count"},
    {GroupMetric::odds_ratio, "odds_ratio"},
    {GroupMetric::uncertainty, "uncertainty"},
    {GroupMetric::lexicographic, "lexicographic"},
};

}  // namespace

GroupMetric parse_metric(std::string_view name) {
  for (const auto& m : kMetricNames)
    if (name == m.name) return m.metric;
  throw FilterError("unknown metric '" + std::string(name) + "'");
}

const char* to_string(GroupMetric metric) noexcept {
  for (const auto& m : kMetricNames)
    if (m.metric == metric) return m.name;
  return "?";
}

double metric_value(const ExplanationGroup& group, GroupMetric metric) {
  switch (metric) {
    case GroupMetric::total: return static_cast<double>(group.size());
    case GroupMetric::positive_truth: return static_cast<double>(group.positive_truth());
    case GroupMetric::predicted_positive: return static_cast<double>(group.counts.predicted_positive());
    case GroupMetric::incorrect_count: return static_cast<double>(group.incorrect());
    case GroupMetric::odds_ratio:
      return group.odds.defined ? group.odds.value : std::numeric_limits<double>::quiet_NaN();
    case GroupMetric::uncertainty: return uncertainty(group.odds);
    case GroupMetric::lexicographic: break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void sort_groups(std::vector<ExplanationGroup>& groups, std::span<const SortKey> spec, const SparseDataset& dataset) {
  auto names_of = [&](const FeatureSet& key) {
    std::vector<std::string_view> names;
    names.reserve(key.size());
    for (auto f : key) names.push_back(dataset.feature_name(f));
    return names;
  };
  auto compare = [&](const ExplanationGroup& a, const ExplanationGroup& b) -> int {
    for (const auto& k : spec) {
      int c = 0;
      if (k.metric == GroupMetric::lexicographic) {
        const auto na = names_of(a.key), nb = names_of(b.key);
        c = na < nb ? -1 : (nb < na ? 1 : 0);
      } else {
        const double va = metric_value(a, k.metric), vb = metric_value(b, k.metric);
        const bool nan_a = std::isnan(va), nan_b = std::isnan(vb);
        if (nan_a || nan_b) {
          if (nan_a != nan_b) return nan_a ? 1 : -1;
          continue;
        }
        c = va < vb ? -1 : (vb < va ? 1 : 0);
      }
      if (k.direction == SortDirection::descending) c = -c;
      if (c != 0) return c;
    }
    return a.key < b.key ? -1 : (b.key < a.key ? 1 : 0);
  };
  std::stable_sort(groups.begin(), groups.end(),
                   [&](const ExplanationGroup& a, const ExplanationGroup& b) { return compare(a, b) < 0; });
}

SearchFilter parse_search(std::string_view query) {
  SearchFilter filter;
  std::size_t pos = 0;
  while (pos <= query.size()) {
    auto comma = query.find(',', pos);
    if (comma == std::string_view::npos) comma = query.size();
    auto term = query.substr(pos, comma - pos);
    const auto first = term.find_first_not_of(" \t");
    if (first != std::string_view::npos) {
      const auto last = term.find_last_not_of(" \t");
      filter.features.emplace_back(term.substr(first, last - first + 1));
    }
    pos = comma + 1;
  }
  if (filter.features.empty()) throw FilterError("search query names no feature");
  return filter;
}

namespace {

bool compare_with(double lhs, Comparison op, double rhs) {
  if (std::isnan(lhs)) return false;
  switch (op) {
    case Comparison::greater: return lhs > rhs;
    case Comparison::greater_equal: return lhs >= rhs;
    case Comparison::less: return lhs < rhs;
    case Comparison::less_equal: return lhs <= rhs;
    case Comparison::equal: return lhs == rhs;
    case Comparison::not_equal: return lhs != rhs;
  }
  return false;
}

constexpr std::pair<Comparison, const char*> kComparisons[] = {
    {Comparison::greater, ">"}, {Comparison::greater_equal, ">="}, {Comparison::less, "<"},
    {Comparison::less_equal, "<="}, {Comparison::equal, "=="}, {Comparison::not_equal, "!="},
};

Comparison parse_comparison(std::string_view op) {
  for (const auto& [c, s] : kComparisons)
    if (op == s) return c;
  throw FilterError("unknown comparison '" + std::string(op) + "'");
}

const char* comparison_name(Comparison op) {
  for (const auto& [c, s] : kComparisons)
    if (c == op) return s;
  return "?";
}

std::vector<ItemId> collect(const std::vector<ExplanationGroup>& groups, auto&& keep) {
  std::vector<ItemId> out;
  for (const auto& g : groups)
    if (keep(g)) out.insert(out.end(), g.items.begin(), g.items.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<ItemId> apply_filter(const DiagnosticData& data, std::span<const ItemId> parent, const Filter& filter) {
  return std::visit(
      [&](const auto& f) -> std::vector<ItemId> {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ScoreRangeFilter>) {
          if (!(f.lo <= f.hi)) throw FilterError("score range needs lo <= hi");
          std::vector<ItemId> out;
          for (auto id : parent) {
            const double s = data.prediction(id).score;
            if (f.lo <= s && s <= f.hi) out.push_back(id);
          }
          std::sort(out.begin(), out.end());
          return out;
        } else if constexpr (std::is_same_v<F, GroupSelectionFilter>) {
          const auto groups = group_explanations(data, parent);
          std::set<FeatureSet> wanted(f.keys.begin(), f.keys.end());
          for (const auto& key : wanted) {
            const bool known = std::any_of(groups.begin(), groups.end(), [&](const auto& g) { return g.key == key; });
            if (!known) throw FilterError("unknown group key in selection");
          }
          return collect(groups, [&](const ExplanationGroup& g) { return wanted.count(g.key) > 0; });
        } else if constexpr (std::is_same_v<F, SearchFilter>) {
          if (f.features.empty()) throw FilterError("search query names no feature");
          FeatureSet required;
          for (const auto& name : f.features) {
            const auto idx = data.dataset().feature_by_name(name);
            if (!idx) throw FilterError("unknown feature '" + name + "'");
            required.push_back(*idx);
          }
          std::sort(required.begin(), required.end());
          required.erase(std::unique(required.begin(), required.end()), required.end());
          const auto groups = group_explanations(data, parent);
          return collect(groups, [&](const ExplanationGroup& g) {
            return std::includes(g.key.begin(), g.key.end(), required.begin(), required.end());
          });
        } else {
          if (f.metric == GroupMetric::lexicographic) throw FilterError("cannot condition on lexicographic order");
          const auto groups = group_explanations(data, parent);
          return collect(groups, [&](const ExplanationGroup& g) {
            return compare_with(metric_value(g, f.metric), f.op, f.value);
          });
        }
      },
      filter);
}

SessionState::SessionState(std::shared_ptr<const DiagnosticData> data) : data_(std::move(data)) {
  stack_.push_back({std::nullopt, data_->all_items()});
}

const FilterStackEntry& SessionState::push(const Filter& filter) {
  auto items = apply_filter(*data_, current(), filter);
  stack_.push_back({filter, std::move(items)});
  return stack_.back();
}

void SessionState::pop_to(std::size_t depth) {
  if (depth >= stack_.size())
    throw FilterError("filter stack has no entry at depth " + std::to_string(depth));
  stack_.resize(depth + 1);
}

std::vector<ExplanationGroup> SessionState::groups() const {
  auto groups = group_explanations(*data_, current());
  sort_groups(groups, sort_, data_->dataset());
  return groups;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const ExplanationGroup& group, const SparseDataset& dataset) {
  nlohmann::json names = nlohmann::json::array();
  for (auto f : group.key) names.push_back(dataset.feature_name(f));
  return {{"key", group.key},
          {"names", std::move(names)},
          {"size", group.size()},
          {"positive_truth", group.positive_truth()},
          {"counts", {{"tp", group.counts.tp}, {"fp", group.counts.fp}, {"tn", group.counts.tn}, {"fn", group.counts.fn}}},
          {"or", number_or_null(group.odds.value)},
          {"ci", {number_or_null(group.odds.ci_low), number_or_null(group.odds.ci_high)}},
          {"uncertain", group.odds.uncertain},
          {"corrected", group.odds.corrected},
          {"uncertainty", number_or_null(uncertainty(group.odds))}};
}

nlohmann::json to_json(const Filter& filter) {
  return std::visit(
      [](const auto& f) -> nlohmann::json {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ScoreRangeFilter>) {
          return {{"type", "score_range"}, {"lo", f.lo}, {"hi", f.hi}};
        } else if constexpr (std::is_same_v<F, GroupSelectionFilter>) {
          return {{"type", "select"}, {"keys", f.keys}};
        } else if constexpr (std::is_same_v<F, SearchFilter>) {
          return {{"type", "search"}, {"features", f.features}};
        } else {
          return {{"type", "condition"}, {"metric", to_string(f.metric)}, {"op", comparison_name(f.op)}, {"value", f.value}};
        }
      },
      filter);
}

Filter filter_from_json(const nlohmann::json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "score_range") return ScoreRangeFilter{j.at("lo").get<double>(), j.at("hi").get<double>()};
    if (type == "select") {
      GroupSelectionFilter f;
      for (const auto& k : j.at("keys")) {
        auto key = k.get<FeatureSet>();
        std::sort(key.begin(), key.end());
        key.erase(std::unique(key.begin(), key.end()), key.end());
        f.keys.push_back(std::move(key));
      }
      return f;
    }
    if (type == "search") {
      if (j.contains("query")) return parse_search(j.at("query").get<std::string>());
      return SearchFilter{j.at("features").get<std::vector<std::string>>()};
    }
    if (type == "condition")
      return ConditionFilter{parse_metric(j.at("metric").get<std::string>()),
                             parse_comparison(j.at("op").get<std::string>()), j.at("value").get<double>()};
    throw FilterError("unknown filter type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FilterError(std::string("malformed filter: ") + e.what());
  }
}

}  // namespace modeldx
