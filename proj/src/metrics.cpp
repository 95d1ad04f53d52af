#include "modeldx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modeldx {

double ConfusionMatrix::accuracy() const noexcept {
  const auto n = total();
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(tp + tn) / n;
}

void ConfusionMatrix::add(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::tp: ++tp; break;
    case Outcome::fp: ++fp; break;
    case Outcome::tn: ++tn; break;
    case Outcome::fn: ++fn; break;
  }
}

ConfusionMatrix confusion(std::span<const PredictionRecord> predictions) {
  ConfusionMatrix m;
  for (const auto& p : predictions) m.add(p.outcome());
  return m;
}

RocCurve roc_auc(std::span<const PredictionRecord> predictions, double threshold) {
  std::size_t positives = 0;
  for (const auto& p : predictions) positives += p.label ? 1 : 0;
  const std::size_t negatives = predictions.size() - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedAuc("AUC is undefined without both positive and negative items");

  std::vector<const PredictionRecord*> order;
  order.reserve(predictions.size());
  for (const auto& p : predictions) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->score > b->score; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = order[i]->score;
    for (; i < order.size() && order[i]->score == s; ++i) (order[i]->label ? tp : fp) += 1;
    const RocPoint next{static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives, s};
    const auto& prev = roc.points.back();
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2;
    roc.points.push_back(next);
  }
  roc.auc = area;

  // Operating point of the rule score > threshold.
  std::size_t op_tp = 0, op_fp = 0;
  for (const auto& p : predictions)
    if (p.score > threshold) (p.label ? op_tp : op_fp) += 1;
  roc.operating_fpr = static_cast<double>(op_fp) / negatives;
  roc.operating_tpr = static_cast<double>(op_tp) / positives;
  return roc;
}

ScoreHistogram histogram(std::span<const PredictionRecord> predictions, std::size_t bins, double threshold) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  ScoreHistogram h;
  h.threshold = threshold;
  h.bins.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    h.bins[i].lo = static_cast<double>(i) / bins;
    h.bins[i].hi = static_cast<double>(i + 1) / bins;
  }
  for (const auto& p : predictions) {
    auto idx = static_cast<std::size_t>(std::floor(p.score * static_cast<double>(bins)));
    idx = std::min(idx, bins - 1);
    h.bins[idx].counts.add(p.outcome());
  }
  return h;
}

nlohmann::json to_json(const ConfusionMatrix& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"predicted_positive", m.predicted_positive()},
          {"predicted_negative", m.predicted_negative()},
          {"actual_positive", m.actual_positive()},
          {"actual_negative", m.actual_negative()},
          {"total", m.total()}};
}

nlohmann::json to_json(const RocCurve& roc) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : roc.points) {
    nlohmann::json t = std::isinf(p.threshold) ? nlohmann::json(nullptr) : nlohmann::json(p.threshold);
    points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", t}});
  }
  return {{"points", std::move(points)},
          {"auc", roc.auc},
          {"operating_point", {{"fpr", roc.operating_fpr}, {"tpr", roc.operating_tpr}}}};
}

nlohmann::json to_json(const ScoreHistogram& h) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : h.bins)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"tp", b.counts.tp}, {"fp", b.counts.fp},
                    {"tn", b.counts.tn}, {"fn", b.counts.fn}});
  return {{"bins", std::move(bins)}, {"threshold", h.threshold}};
}

namespace {

nlohmann::json accuracy_json(const ConfusionMatrix& m) {
  return m.total() == 0 ? nlohmann::json(nullptr) : nlohmann::json(m.accuracy());
}

}  // namespace

nlohmann::json summary_json(std::span<const PredictionRecord> train, std::span<const PredictionRecord> test,
                            double threshold, std::size_t bins) {
  const auto cm_train = confusion(train);
  const auto cm_test = confusion(test);

  nlohmann::json roc = {{"threshold", threshold}, {"auc_train", nullptr}, {"auc_test", nullptr},
                        {"points", nlohmann::json::array()}, {"operating_point", nullptr}};
  try {
    roc["auc_train"] = roc_auc(train, threshold).auc;
  } catch (const UndefinedAuc&) {
  }
  try {
    const auto test_roc = to_json(roc_auc(test, threshold));
    roc["auc_test"] = test_roc["auc"];
    roc["points"] = test_roc["points"];
    roc["operating_point"] = test_roc["operating_point"];
  } catch (const UndefinedAuc&) {
  }

  return {{"confusion", {{"train", to_json(cm_train)}, {"test", to_json(cm_test)}}},
          {"roc", std::move(roc)},
          {"histogram", {{"train", to_json(histogram(train, bins, threshold))},
                         {"test", to_json(histogram(test, bins, threshold))}}},
          {"accuracy", {{"train", accuracy_json(cm_train)}, {"test", accuracy_json(cm_test)}}}};
}

}  // namespace modeldx
