#include "modeldx/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace modeldx {

namespace {

std::vector<ScoredLabel> score_rows(const ScoredModel& model, const SparseDataset& dataset,
                                    std::span<const std::size_t> rows) {
  std::vector<ScoredLabel> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    const auto& item = dataset.items().at(r);
    out.push_back({model.score(item.active), item.label});
  }
  return out;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

ScoredModel train_logistic(const SparseDataset& dataset, std::span<const std::size_t> rows,
                           const LogisticConfig& config) {
  if (rows.empty()) throw ModelError("logistic training needs a nonempty training split");
  if (config.epochs < 0 || !(config.learning_rate > 0.0) || config.l2 < 0.0)
    throw ModelError("invalid logistic training configuration");

  const auto& items = dataset.items();
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return items.at(a).id < items.at(b).id; });

  std::vector<double> w(dataset.num_features(), 0.0);
  double bias = 0.0;
  std::mt19937_64 rng(config.seed);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0;
    for (auto r : order) {
      const auto& item = items[r];
      double z = bias;
      for (auto f : item.active) z += w[f];
      const double y = item.label ? 1.0 : 0.0;
      loss += softplus(z) - y * z;
      const double g = sigmoid(z) - y;
      bias -= config.learning_rate * g;
      // L2 is applied lazily, only to the weights touched by this item.
      for (auto f : item.active) w[f] -= config.learning_rate * (g + config.l2 * w[f]);
    }
    if (!std::isfinite(loss))
      throw ModelError("logistic training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                       " (learning rate " + std::to_string(config.learning_rate) + ")");
  }

  ScoredModel model;
  model.predictor = std::make_shared<LogisticModel>(std::move(w), bias);
  model.name = "logistic";
  model.num_features = dataset.num_features();
  const auto training = score_rows(model, dataset, rows);
  model.threshold = calibrate_threshold(training);
  return model;
}

ScoredModel train_logistic(const SparseDataset& dataset, const LogisticConfig& config) {
  const auto rows = dataset.indices_of(Split::train);
  return train_logistic(dataset, rows, config);
}

ScoredModel train_naive_bayes(const SparseDataset& dataset, std::span<const std::size_t> rows, double smoothing) {
  if (rows.empty()) throw ModelError("naive Bayes training needs a nonempty training split");
  if (!(smoothing > 0.0)) throw ModelError("naive Bayes smoothing must be positive");

  const auto num_features = dataset.num_features();
  std::vector<double> count_pos(num_features, 0.0), count_neg(num_features, 0.0);
  double n_pos = 0.0, n_neg = 0.0;
  for (auto r : rows) {
    const auto& item = dataset.items().at(r);
    auto& counts = item.label ? count_pos : count_neg;
    (item.label ? n_pos : n_neg) += 1.0;
    for (auto f : item.active) counts[f] += 1.0;
  }
  if (n_pos == 0.0 || n_neg == 0.0)
    throw ModelError("naive Bayes training needs both classes present (prior undefined)");

  double absent = 0.0;
  std::vector<double> presence(num_features);
  for (std::size_t f = 0; f < num_features; ++f) {
    const double p1 = (count_pos[f] + smoothing) / (n_pos + 2 * smoothing);
    const double p0 = (count_neg[f] + smoothing) / (n_neg + 2 * smoothing);
    absent += std::log1p(-p1) - std::log1p(-p0);
    presence[f] = (std::log(p1) - std::log1p(-p1)) - (std::log(p0) - std::log1p(-p0));
  }

  ScoredModel model;
  model.predictor = std::make_shared<NaiveBayesModel>(std::log(n_pos / n_neg), absent, std::move(presence));
  model.name = "bernoulli_naive_bayes";
  model.num_features = num_features;
  const auto training = score_rows(model, dataset, rows);
  model.threshold = calibrate_threshold(training);
  return model;
}

ScoredModel train_naive_bayes(const SparseDataset& dataset, double smoothing) {
  const auto rows = dataset.indices_of(Split::train);
  return train_naive_bayes(dataset, rows, smoothing);
}

}  // namespace modeldx
