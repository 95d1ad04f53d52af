#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modeldx/aggregator.hpp"

namespace modeldx {

/// Items sharing one feature vector and one outcome category.
struct MatrixRow {
  FeatureSet vector;
  Outcome outcome = Outcome::tn;
  /// Ascending.
  std::vector<ItemId> items;

  std::size_t count() const noexcept { return items.size(); }
};

struct MatrixColumn {
  FeatureIndex feature = 0;
  /// Number of items in which the feature is present.
  std::size_t frequency = 0;
  double importance = 0.0;
  bool hidden = false;
};

/// Item-level view of a group: rows are unique (vector, outcome) pairs,
/// columns are the features present in at least one item.
struct ItemMatrix {
  std::vector<MatrixColumn> columns;
  std::vector<MatrixRow> rows;

  std::size_t item_count() const noexcept;
};

/// Rows in (vector, outcome) order, columns by feature index, importance
/// filled in. Throws FilterError on an empty item list.
ItemMatrix build_matrix(const DiagnosticData& data, std::span<const ItemId> items);

/// Gini impurity decrease of splitting the matrix's items on presence of
/// each column's feature, against the four outcome categories. Aligned with
/// `matrix.columns`.
std::vector<double> gini_importance(const ItemMatrix& matrix);

/// 1 - sum of squared class shares; 0 for an empty distribution.
double gini_impurity(std::span<const std::size_t> class_counts);

enum class RowOrder { feature_order, count };
enum class ColumnOrder { importance, frequency, lexicographic };

RowOrder parse_row_order(std::string_view name);
ColumnOrder parse_column_order(std::string_view name);

/// Orders columns first, then rows. feature_order sorts rows by their
/// presence pattern over the visible columns in column order, present
/// before absent. Ties go to the row with the smaller first item id.
ItemMatrix order_matrix(ItemMatrix matrix, RowOrder rows, ColumnOrder columns, const SparseDataset& dataset);

/// Marks columns with importance <= threshold hidden. Rows are untouched.
ItemMatrix hide_nondiscriminative(ItemMatrix matrix, double threshold = 0.0);
ItemMatrix show_all_columns(ItemMatrix matrix);

/// One row per item, rows in the same relative order.
std::vector<MatrixRow> expand_rows(const ItemMatrix& matrix);

nlohmann::json to_json(const ItemMatrix& matrix, const SparseDataset& dataset);

}  // namespace modeldx
