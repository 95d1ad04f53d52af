#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modeldx/sparse_data.hpp"

namespace modeldx {

/// Raised when a model cannot produce a valid score: an unreachable or
/// misbehaving external process, an out-of-range score, or a feature index
/// outside the model's feature space.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Black-box scoring capability. Implementations must be deterministic and
/// safe to call concurrently.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual double score(FeatureView active) const = 0;

  /// Default implementation scores one set at a time.
  virtual std::vector<double> score_batch(std::span<const FeatureSet> sets) const;

  /// Artifact kind tag, e.g. "logistic".
  virtual std::string kind() const = 0;

  /// Kind-specific parameters for the model artifact; null when the
  /// predictor cannot be persisted.
  virtual nlohmann::json parameters() const { return nullptr; }
};

/// score(v) = sigmoid(bias + sum of weights over active features).
class LogisticModel final : public Predictor {
 public:
  LogisticModel(std::vector<double> weights, double bias);

  double score(FeatureView active) const override;
  std::string kind() const override { return "logistic"; }
  nlohmann::json parameters() const override;

  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_;
};

/// Bernoulli naive Bayes in log-odds form: the posterior log-odds of an item
/// are prior_log_odds + absent_log_odds + sum of presence_log_odds over its
/// active features. absent_log_odds accounts for every feature being absent.
class NaiveBayesModel final : public Predictor {
 public:
  NaiveBayesModel(double prior_log_odds, double absent_log_odds, std::vector<double> presence_log_odds);

  double score(FeatureView active) const override;
  double log_odds(FeatureView active) const;
  std::string kind() const override { return "naive_bayes"; }
  nlohmann::json parameters() const override;

 private:
  double prior_log_odds_;
  double absent_log_odds_;
  std::vector<double> presence_log_odds_;
};

class ConstantModel final : public Predictor {
 public:
  explicit ConstantModel(double value);
  double score(FeatureView) const override { return value_; }
  std::string kind() const override { return "constant"; }
  nlohmann::json parameters() const override { return {{"value", value_}}; }

 private:
  double value_;
};

/// Wraps an arbitrary scoring function. Not persistable.
class FunctionModel final : public Predictor {
 public:
  explicit FunctionModel(std::function<double(FeatureView)> fn) : fn_(std::move(fn)) {}
  double score(FeatureView active) const override { return fn_(active); }
  std::string kind() const override { return "function"; }

 private:
  std::function<double(FeatureView)> fn_;
};

/// Forwards to another predictor and counts how many sets reach it.
class CountingPredictor final : public Predictor {
 public:
  explicit CountingPredictor(std::shared_ptr<const Predictor> inner) : inner_(std::move(inner)) {}

  double score(FeatureView active) const override;
  std::vector<double> score_batch(std::span<const FeatureSet> sets) const override;
  std::string kind() const override { return inner_->kind(); }
  nlohmann::json parameters() const override { return inner_->parameters(); }

  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  std::shared_ptr<const Predictor> inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

double sigmoid(double z) noexcept;

/// A predictor bound to a feature space and a decision threshold.
/// label(v) is score(v) > threshold, strictly.
struct ScoredModel {
  std::shared_ptr<const Predictor> predictor;
  double threshold = 0.5;
  std::string name;
  std::size_t num_features = 0;

  /// Validates feature indices and the returned score range.
  double score(FeatureView active) const;
  std::vector<double> score_batch(std::span<const FeatureSet> sets) const;
  bool label(FeatureView active) const { return is_positive(score(active)); }
  bool is_positive(double score) const noexcept { return score > threshold; }
};

enum class Outcome : std::uint8_t { tp, fp, tn, fn };

const char* to_string(Outcome outcome) noexcept;

struct PredictionRecord {
  ItemId item = 0;
  double score = 0.0;
  bool predicted = false;
  bool label = false;

  bool correct() const noexcept { return predicted == label; }
  Outcome outcome() const noexcept {
    if (predicted) return label ? Outcome::tp : Outcome::fp;
    return label ? Outcome::fn : Outcome::tn;
  }
};

/// One record per dataset item, in dataset order.
std::vector<PredictionRecord> predict_all(const ScoredModel& model, const SparseDataset& dataset);

struct ScoredLabel {
  double score = 0.0;
  bool label = false;
};

/// Threshold that maximizes correct predictions. Candidates are 0, 1 and the
/// midpoints between consecutive distinct scores; ties go to the candidate
/// closest to 0.5, then to the smaller one.
double calibrate_threshold(std::span<const ScoredLabel> training);

/// Scores the train split of `dataset` and stores the calibrated threshold
/// in `model`.
double calibrate_threshold(ScoredModel& model, const SparseDataset& dataset);

/// Candidate set used by calibrate_threshold, ascending.
std::vector<double> threshold_candidates(std::span<const ScoredLabel> training);

/// Model artifact (JSON). Only persistable predictors can be saved.
nlohmann::json model_artifact(const ScoredModel& model);
ScoredModel model_from_artifact(const nlohmann::json& artifact);
void save_model(const ScoredModel& model, const std::filesystem::path& path);
ScoredModel load_model(const std::filesystem::path& path);

/// Content hash of the artifact; explanation runs record it so stale runs
/// can be detected.
std::string model_hash(const ScoredModel& model);

}  // namespace modeldx
