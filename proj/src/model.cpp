#include "modeldx/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "modeldx/bridge.hpp"
#include "modeldx/hashing.hpp"

namespace modeldx {

namespace {
constexpr const char* kArtifactFormat = "modeldx-model/1";
}

std::vector<double> Predictor::score_batch(std::span<const FeatureSet> sets) const {
  std::vector<double> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(score(s));
  return out;
}

double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LogisticModel::LogisticModel(std::vector<double> weights, double bias)
    : weights_(std::move(weights)), bias_(bias) {}

double LogisticModel::score(FeatureView active) const {
  double z = bias_;
  for (auto f : active) z += weights_.at(f);
  return sigmoid(z);
}

nlohmann::json LogisticModel::parameters() const { return {{"weights", weights_}, {"bias", bias_}}; }

NaiveBayesModel::NaiveBayesModel(double prior_log_odds, double absent_log_odds,
                                 std::vector<double> presence_log_odds)
    : prior_log_odds_(prior_log_odds),
      absent_log_odds_(absent_log_odds),
      presence_log_odds_(std::move(presence_log_odds)) {}

double NaiveBayesModel::log_odds(FeatureView active) const {
  double z = prior_log_odds_ + absent_log_odds_;
  for (auto f : active) z += presence_log_odds_.at(f);
  return z;
}

double NaiveBayesModel::score(FeatureView active) const { return sigmoid(log_odds(active)); }

nlohmann::json NaiveBayesModel::parameters() const {
  return {{"prior_log_odds", prior_log_odds_},
          {"absent_log_odds", absent_log_odds_},
          {"presence_log_odds", presence_log_odds_}};
}

ConstantModel::ConstantModel(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw ModelError("constant score must lie in [0, 1]");
}

double CountingPredictor::score(FeatureView active) const {
  calls_.fetch_add(1, std::memory_order_relaxed);
  return inner_->score(active);
}

std::vector<double> CountingPredictor::score_batch(std::span<const FeatureSet> sets) const {
  calls_.fetch_add(sets.size(), std::memory_order_relaxed);
  return inner_->score_batch(sets);
}

namespace {

void check_features(const ScoredModel& model, FeatureView active) {
  if (model.num_features == 0) return;
  if (!active.empty() && active.back() >= model.num_features)
    throw ModelError("feature index " + std::to_string(active.back()) +
                     " outside the model's feature space of " + std::to_string(model.num_features));
}

double check_score(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ModelError("model returned score " + std::to_string(s) + " outside [0, 1]");
  return s;
}

}  // namespace

double ScoredModel::score(FeatureView active) const {
  check_features(*this, active);
  return check_score(predictor->score(active));
}

std::vector<double> ScoredModel::score_batch(std::span<const FeatureSet> sets) const {
  for (const auto& s : sets) check_features(*this, s);
  auto scores = predictor->score_batch(sets);
  if (scores.size() != sets.size()) throw ModelError("predictor returned the wrong number of scores");
  for (double s : scores) check_score(s);
  return scores;
}

const char* to_string(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::tp: return "TP";
    case Outcome::fp: return "FP";
    case Outcome::tn: return "TN";
    case Outcome::fn: return "FN";
  }
  return "?";
}

std::vector<PredictionRecord> predict_all(const ScoredModel& model, const SparseDataset& dataset) {
  std::vector<FeatureSet> sets;
  sets.reserve(dataset.size());
  for (const auto& item : dataset.items()) sets.push_back(item.active);
  const auto scores = model.score_batch(sets);

  std::vector<PredictionRecord> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& item = dataset.items()[i];
    out.push_back({item.id, scores[i], model.is_positive(scores[i]), item.label});
  }
  return out;
}

std::vector<double> threshold_candidates(std::span<const ScoredLabel> training) {
  std::vector<double> scores;
  scores.reserve(training.size());
  for (const auto& s : training) scores.push_back(s.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  std::vector<double> candidates{0.0};
  for (std::size_t i = 1; i < scores.size(); ++i) candidates.push_back(scores[i - 1] + (scores[i] - scores[i - 1]) / 2);
  candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  return candidates;
}

double calibrate_threshold(std::span<const ScoredLabel> training) {
  if (training.empty()) throw ModelError("threshold calibration needs at least one training item");

  std::vector<ScoredLabel> sorted(training.begin(), training.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  // negatives_upto[i]: negatives among the i lowest scores.
  std::vector<std::size_t> negatives_upto(sorted.size() + 1, 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) negatives_upto[i + 1] = negatives_upto[i] + (sorted[i].label ? 0 : 1);
  const std::size_t total_positive = sorted.size() - negatives_upto.back();

  double best = 0.0;
  std::size_t best_correct = 0;
  bool have_best = false;
  for (double t : threshold_candidates(training)) {
    // Items with score <= t are predicted negative.
    const auto cut = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), t, [](double v, const auto& s) { return v < s.score; }) -
        sorted.begin());
    const std::size_t neg_below = negatives_upto[cut];
    const std::size_t pos_above = total_positive - (cut - neg_below);
    const std::size_t correct = neg_below + pos_above;
    const bool better = !have_best || correct > best_correct ||
                        (correct == best_correct && std::abs(t - 0.5) < std::abs(best - 0.5));
    if (better) {
      best = t;
      best_correct = correct;
      have_best = true;
    }
  }
  return best;
}

double calibrate_threshold(ScoredModel& model, const SparseDataset& dataset) {
  const auto rows = dataset.indices_of(Split::train);
  std::vector<FeatureSet> sets;
  sets.reserve(rows.size());
  for (auto r : rows) sets.push_back(dataset.items()[r].active);
  const auto scores = model.score_batch(sets);
  std::vector<ScoredLabel> training;
  training.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) training.push_back({scores[i], dataset.items()[rows[i]].label});
  model.threshold = calibrate_threshold(training);
  return model.threshold;
}

nlohmann::json model_artifact(const ScoredModel& model) {
  auto params = model.predictor->parameters();
  if (params.is_null()) throw ModelError("model kind '" + model.predictor->kind() + "' cannot be saved");
  return {{"format", kArtifactFormat},
          {"kind", model.predictor->kind()},
          {"name", model.name},
          {"threshold", model.threshold},
          {"num_features", model.num_features},
          {"params", std::move(params)}};
}

ScoredModel model_from_artifact(const nlohmann::json& artifact) {
  try {
    if (artifact.at("format") != kArtifactFormat) throw ModelError("unsupported model artifact format");
    const auto kind = artifact.at("kind").get<std::string>();
    const auto& p = artifact.at("params");
    ScoredModel model;
    model.threshold = artifact.at("threshold").get<double>();
    model.name = artifact.value("name", kind);
    model.num_features = artifact.at("num_features").get<std::size_t>();
    if (kind == "logistic") {
      model.predictor = std::make_shared<LogisticModel>(p.at("weights").get<std::vector<double>>(),
                                                        p.at("bias").get<double>());
    } else if (kind == "naive_bayes") {
      model.predictor = std::make_shared<NaiveBayesModel>(p.at("prior_log_odds").get<double>(),
                                                          p.at("absent_log_odds").get<double>(),
                                                          p.at("presence_log_odds").get<std::vector<double>>());
    } else if (kind == "constant") {
      model.predictor = std::make_shared<ConstantModel>(p.at("value").get<double>());
    } else if (kind == "bridge") {
      model.predictor = bridge_from_parameters(p);
    } else {
      throw ModelError("unknown model kind '" + kind + "'");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model artifact: ") + e.what());
  }
}

void save_model(const ScoredModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write " + path.string());
  out << model_artifact(model).dump(2) << '\n';
}

ScoredModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open " + path.string());
  nlohmann::json artifact;
  try {
    in >> artifact;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("cannot parse " + path.string() + ": " + e.what());
  }
  return model_from_artifact(artifact);
}

std::string model_hash(const ScoredModel& model) {
  auto params = model.predictor->parameters();
  if (params.is_null()) {
    std::ostringstream key;
    key.precision(17);
    key << model.predictor->kind() << '|' << model.name << '|' << model.threshold << '|' << model.num_features
        << '|' << model.predictor.get();
    return hex64(fnv1a64(key.str()));
  }
  return hex64(fnv1a64(model_artifact(model).dump()));
}

}  // namespace modeldx
