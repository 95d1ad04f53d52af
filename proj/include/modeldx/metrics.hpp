#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "modeldx/model.hpp"

namespace modeldx {

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  std::size_t predicted_positive() const noexcept { return tp + fp; }
  std::size_t predicted_negative() const noexcept { return tn + fn; }
  std::size_t actual_positive() const noexcept { return tp + fn; }
  std::size_t actual_negative() const noexcept { return fp + tn; }
  /// NaN on an empty matrix.
  double accuracy() const noexcept;

  void add(Outcome outcome) noexcept;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const PredictionRecord> predictions);

/// Raised when AUC is requested for a split that lacks one of the classes.
class UndefinedAuc : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  /// Items with score >= threshold are counted positive at this point; the
  /// (0, 0) origin carries +infinity.
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  /// (fpr, tpr) of the calibrated decision rule score > t.
  double operating_fpr = 0.0;
  double operating_tpr = 0.0;
};

/// Sweeps the distinct scores in descending order; tied scores move the curve
/// in one diagonal step. AUC is the trapezoidal area.
RocCurve roc_auc(std::span<const PredictionRecord> predictions, double threshold);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  ConfusionMatrix counts;
};

struct ScoreHistogram {
  std::vector<HistogramBin> bins;
  double threshold = 0.0;
};

/// Bin i covers [i/B, (i+1)/B); the last bin also takes score 1.
ScoreHistogram histogram(std::span<const PredictionRecord> predictions, std::size_t bins, double threshold);

inline constexpr std::size_t kDefaultHistogramBins = 50;

nlohmann::json to_json(const ConfusionMatrix& m);
nlohmann::json to_json(const RocCurve& roc);
nlohmann::json to_json(const ScoreHistogram& h);

/// Summary payload: confusion, roc, histogram and accuracy for the train and
/// test splits. The ROC point list is for the test split; AUC is given for
/// both (null where undefined).
nlohmann::json summary_json(std::span<const PredictionRecord> train, std::span<const PredictionRecord> test,
                            double threshold, std::size_t bins = kDefaultHistogramBins);

}  // namespace modeldx
