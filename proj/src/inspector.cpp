#include "modeldx/inspector.hpp"

#include <algorithm>
#include <array>
#include <map>

namespace modeldx {

std::size_t ItemMatrix::item_count() const noexcept {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.count();
  return n;
}

ItemMatrix build_matrix(const DiagnosticData& data, std::span<const ItemId> items) {
  if (items.empty()) throw FilterError("cannot build an item matrix for an empty group");
  std::map<std::pair<FeatureSet, Outcome>, std::vector<ItemId>> rows;
  std::map<FeatureIndex, std::size_t> frequency;
  for (auto id : items) {
    const auto* item = data.dataset().find(id);
    if (!item) throw IntegrityError("unknown item " + std::to_string(id));
    rows[{item->active, data.prediction(id).outcome()}].push_back(id);
    for (auto f : item->active) ++frequency[f];
  }

  ItemMatrix m;
  for (auto& [key, ids] : rows) {
    std::sort(ids.begin(), ids.end());
    m.rows.push_back({key.first, key.second, std::move(ids)});
  }
  for (const auto& [f, n] : frequency) m.columns.push_back({f, n, 0.0, false});
  const auto importance = gini_importance(m);
  for (std::size_t c = 0; c < m.columns.size(); ++c) m.columns[c].importance = importance[c];
  return m;
}

double gini_impurity(std::span<const std::size_t> class_counts) {
  std::size_t total = 0;
  for (auto c : class_counts) total += c;
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : class_counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::vector<double> gini_importance(const ItemMatrix& matrix) {
  using Counts = std::array<std::size_t, 4>;
  Counts all{};
  for (const auto& r : matrix.rows) all[static_cast<std::size_t>(r.outcome)] += r.count();
  const double n = static_cast<double>(matrix.item_count());
  const double parent = gini_impurity(all);

  std::vector<double> out;
  out.reserve(matrix.columns.size());
  for (const auto& col : matrix.columns) {
    Counts present{};
    for (const auto& r : matrix.rows)
      if (std::binary_search(r.vector.begin(), r.vector.end(), col.feature))
        present[static_cast<std::size_t>(r.outcome)] += r.count();
    Counts absent{};
    std::size_t n_present = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      absent[k] = all[k] - present[k];
      n_present += present[k];
    }
    const double w_present = static_cast<double>(n_present) / n;
    const double children = w_present * gini_impurity(present) + (1.0 - w_present) * gini_impurity(absent);
    out.push_back(std::max(0.0, parent - children));
  }
  return out;
}

RowOrder parse_row_order(std::string_view name) {
  if (name == "feature-order") return RowOrder::feature_order;
  if (name == "count") return RowOrder::count;
  throw FilterError("unknown row order '" + std::string(name) + "'");
}

ColumnOrder parse_column_order(std::string_view name) {
  if (name == "importance") return ColumnOrder::importance;
  if (name == "frequency") return ColumnOrder::frequency;
  if (name == "lexicographic") return ColumnOrder::lexicographic;
  throw FilterError("unknown column order '" + std::string(name) + "'");
}

ItemMatrix order_matrix(ItemMatrix matrix, RowOrder rows, ColumnOrder columns, const SparseDataset& dataset) {
  auto& cols = matrix.columns;
  switch (columns) {
    case ColumnOrder::importance:
      std::sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) {
        if (a.importance != b.importance) return a.importance > b.importance;
        return a.feature < b.feature;
      });
      break;
    case ColumnOrder::frequency:
      std::sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.feature < b.feature;
      });
      break;
    case ColumnOrder::lexicographic:
      std::sort(cols.begin(), cols.end(), [&](const auto& a, const auto& b) {
        const auto& na = dataset.feature_name(a.feature);
        const auto& nb = dataset.feature_name(b.feature);
        if (na != nb) return na < nb;
        return a.feature < b.feature;
      });
      break;
  }

  auto first_id = [](const MatrixRow& r) { return r.items.front(); };
  if (rows == RowOrder::count) {
    std::sort(matrix.rows.begin(), matrix.rows.end(), [&](const auto& a, const auto& b) {
      if (a.count() != b.count()) return a.count() > b.count();
      return first_id(a) < first_id(b);
    });
  } else {
    std::vector<FeatureIndex> visible;
    for (const auto& c : cols)
      if (!c.hidden) visible.push_back(c.feature);
    auto has = [](const MatrixRow& r, FeatureIndex f) { return std::binary_search(r.vector.begin(), r.vector.end(), f); };
    std::sort(matrix.rows.begin(), matrix.rows.end(), [&](const auto& a, const auto& b) {
      for (auto f : visible) {
        const bool pa = has(a, f), pb = has(b, f);
        if (pa != pb) return pa;
      }
      return first_id(a) < first_id(b);
    });
  }
  return matrix;
}

ItemMatrix hide_nondiscriminative(ItemMatrix matrix, double threshold) {
  for (auto& c : matrix.columns) c.hidden = c.importance <= threshold;
  return matrix;
}

ItemMatrix show_all_columns(ItemMatrix matrix) {
  for (auto& c : matrix.columns) c.hidden = false;
  return matrix;
}

std::vector<MatrixRow> expand_rows(const ItemMatrix& matrix) {
  std::vector<MatrixRow> out;
  out.reserve(matrix.item_count());
  for (const auto& r : matrix.rows)
    for (auto id : r.items) out.push_back({r.vector, r.outcome, {id}});
  return out;
}

nlohmann::json to_json(const ItemMatrix& matrix, const SparseDataset& dataset) {
  nlohmann::json columns = nlohmann::json::array();
  for (const auto& c : matrix.columns)
    columns.push_back({{"feature", c.feature},
                       {"name", dataset.feature_name(c.feature)},
                       {"frequency", c.frequency},
                       {"importance", c.importance},
                       {"hidden", c.hidden}});
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : matrix.rows)
    rows.push_back({{"features", r.vector}, {"outcome", to_string(r.outcome)}, {"count", r.count()}, {"ids", r.items}});
  return {{"columns", std::move(columns)}, {"rows", std::move(rows)}};
}

}  // namespace modeldx
