#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "modeldx/explainer.hpp"
#include "modeldx/metrics.hpp"
#include "modeldx/model.hpp"
#include "modeldx/sparse_data.hpp"

namespace modeldx {

/// Inconsistent inputs, e.g. an item with no explanation.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unresolvable filter, sort, or group request.
class FilterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Odds of a positive ground truth inside a group relative to the rest of
/// the current item set, with a Wald interval on the log scale.
struct OddsRatio {
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool uncertain = true;
  /// +0.5 added to every count because one of them was zero.
  bool corrected = false;
  /// False when the complement is empty; value and bounds are NaN then.
  bool defined = false;
};

inline constexpr double kConfidenceZ = 1.96;

/// OR = (P_e/N_e) / (P_t/N_t), CI = exp(ln OR +- z*sqrt(1/P_e + 1/N_e + 1/P_t + 1/N_t)).
/// When any count is zero all four get +0.5 first. An empty complement
/// (P_t + N_t == 0) yields an undefined, uncertain result.
OddsRatio odds_ratio(std::size_t pos_group, std::size_t neg_group, std::size_t pos_rest, std::size_t neg_rest,
                     double z = kConfidenceZ);

/// -|ln OR|; 0 when the group looks like the rest. NaN for undefined ratios.
double uncertainty(const OddsRatio& odds);
double uncertainty(double odds_ratio);

/// Precomputed predictions and explanations for one dataset and model. Read
/// only once built; shared across sessions.
class DiagnosticData {
 public:
  DiagnosticData(std::shared_ptr<const SparseDataset> dataset, std::vector<PredictionRecord> predictions,
                 std::vector<Explanation> explanations);

  const SparseDataset& dataset() const noexcept { return *dataset_; }
  const std::vector<PredictionRecord>& predictions() const noexcept { return predictions_; }

  const PredictionRecord& prediction(ItemId id) const;
  /// Null when the run has no explanation for the item.
  const Explanation* explanation(ItemId id) const;
  /// All item ids, ascending.
  const std::vector<ItemId>& all_items() const noexcept { return all_items_; }

 private:
  std::shared_ptr<const SparseDataset> dataset_;
  std::vector<PredictionRecord> predictions_;
  std::vector<Explanation> explanations_;
  std::unordered_map<ItemId, std::size_t> prediction_at_;
  std::unordered_map<ItemId, std::size_t> explanation_at_;
  std::vector<ItemId> all_items_;
};

struct ExplanationGroup {
  FeatureSet key;
  /// Ascending.
  std::vector<ItemId> items;
  ConfusionMatrix counts;
  OddsRatio odds;

  std::size_t size() const noexcept { return counts.total(); }
  std::size_t positive_truth() const noexcept { return counts.actual_positive(); }
  std::size_t incorrect() const noexcept { return counts.fp + counts.fn; }
};

/// One group per distinct explanation among `items`, ordered by key. Groups
/// mixing predicted labels stay merged. Odds ratios compare each group with
/// the remaining `items`.
std::vector<ExplanationGroup> group_explanations(const DiagnosticData& data, std::span<const ItemId> items);

enum class GroupMetric {
  total,
  positive_truth,
  predicted_positive,
  incorrect_count,
  odds_ratio,
  uncertainty,
  lexicographic
};

GroupMetric parse_metric(std::string_view name);
const char* to_string(GroupMetric metric) noexcept;

/// Numeric value of a metric; NaN for an undefined odds ratio. Not
/// meaningful for `lexicographic`.
double metric_value(const ExplanationGroup& group, GroupMetric metric);

enum class SortDirection { ascending, descending };

struct SortKey {
  GroupMetric metric = GroupMetric::total;
  SortDirection direction = SortDirection::descending;
};

/// Multi-key stable ordering. NaN metric values go after every number in
/// either direction; full ties fall back to the key compared as index lists.
/// `lexicographic` compares the feature names of the keys.
void sort_groups(std::vector<ExplanationGroup>& groups, std::span<const SortKey> spec, const SparseDataset& dataset);

struct ScoreRangeFilter {
  double lo = 0.0;
  double hi = 1.0;
};
struct GroupSelectionFilter {
  std::vector<FeatureSet> keys;
};
/// Keeps groups whose key contains every listed feature.
struct SearchFilter {
  std::vector<std::string> features;
};
enum class Comparison { greater, greater_equal, less, less_equal, equal, not_equal };
struct ConditionFilter {
  GroupMetric metric = GroupMetric::total;
  Comparison op = Comparison::greater;
  double value = 0.0;
};

using Filter = std::variant<ScoreRangeFilter, GroupSelectionFilter, SearchFilter, ConditionFilter>;

/// Parses a comma separated query ("a, b" means a AND b).
SearchFilter parse_search(std::string_view query);

/// Items of `parent` kept by `filter`, ascending. Empty results are fine.
std::vector<ItemId> apply_filter(const DiagnosticData& data, std::span<const ItemId> parent, const Filter& filter);

struct FilterStackEntry {
  std::optional<Filter> filter;
  std::vector<ItemId> items;
};

/// Filter stack plus sort order for one analysis session. Entry 0 always
/// holds every item.
class SessionState {
 public:
  explicit SessionState(std::shared_ptr<const DiagnosticData> data);

  const DiagnosticData& data() const noexcept { return *data_; }
  const std::vector<FilterStackEntry>& stack() const noexcept { return stack_; }
  std::size_t depth() const noexcept { return stack_.size() - 1; }
  const std::vector<ItemId>& current() const noexcept { return stack_.back().items; }

  /// Applies `filter` to the top entry and pushes the result.
  const FilterStackEntry& push(const Filter& filter);
  /// Drops every entry above `depth`.
  void pop_to(std::size_t depth);

  const std::vector<SortKey>& sort_spec() const noexcept { return sort_; }
  void set_sort_spec(std::vector<SortKey> spec) { sort_ = std::move(spec); }

  /// Groups of the top entry in the session's sort order.
  std::vector<ExplanationGroup> groups() const;

 private:
  std::shared_ptr<const DiagnosticData> data_;
  std::vector<FilterStackEntry> stack_;
  std::vector<SortKey> sort_{{GroupMetric::total, SortDirection::descending}};
};

nlohmann::json to_json(const ExplanationGroup& group, const SparseDataset& dataset);
nlohmann::json to_json(const Filter& filter);
Filter filter_from_json(const nlohmann::json& j);

}  // namespace modeldx
