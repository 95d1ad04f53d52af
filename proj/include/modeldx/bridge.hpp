#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "modeldx/model.hpp"

namespace modeldx {

/// Settings for an external scoring process or endpoint. Exactly one of
/// `command` and `url` must be set.
///
/// Wire format, one JSON object per line (subprocess) or per POST /score
/// body (HTTP):
///   request:  {"id": <int>, "items": [[<active indices>], ...]}
///   response: {"id": <int>, "scores": [<float in [0,1]>, ...]}
struct BridgeConfig {
  std::string command;
  std::string url;
  std::chrono::milliseconds timeout{10000};
  int attempts = 3;
  std::size_t max_batch = 512;
  std::size_t connections = 1;
};

/// One request/response channel. Calls are serialized by the owner.
class BridgeTransport {
 public:
  virtual ~BridgeTransport() = default;
  /// Sends `request` and returns the response carrying the same id. Throws
  /// ModelError on timeout, disconnect, or unparseable output.
  virtual nlohmann::json exchange(const nlohmann::json& request) = 0;
  /// Drops any connection state so the next exchange starts fresh.
  virtual void reset() = 0;
};

std::unique_ptr<BridgeTransport> make_subprocess_transport(const std::string& command,
                                                           std::chrono::milliseconds timeout);
std::unique_ptr<BridgeTransport> make_http_transport(const std::string& url, std::chrono::milliseconds timeout);

/// Predictor backed by an external model. Batches are split at max_batch;
/// every request is retried up to `attempts` times before the failure is
/// raised as ModelError.
class ExternalModel final : public Predictor {
 public:
  explicit ExternalModel(BridgeConfig config);
  ~ExternalModel() override;

  double score(FeatureView active) const override;
  std::vector<double> score_batch(std::span<const FeatureSet> sets) const override;
  std::string kind() const override { return "bridge"; }
  nlohmann::json parameters() const override;

  const BridgeConfig& config() const noexcept { return config_; }
  std::uint64_t requests_sent() const noexcept { return next_id_.load(); }

 private:
  struct Connection {
    std::mutex mutex;
    std::unique_ptr<BridgeTransport> transport;
  };

  std::vector<double> score_chunk(Connection& conn, std::span<const FeatureSet> sets) const;
  std::unique_ptr<BridgeTransport> open() const;

  BridgeConfig config_;
  std::vector<std::unique_ptr<Connection>> connections_;
  mutable std::atomic<std::uint64_t> next_id_{0};
  mutable std::atomic<std::size_t> round_robin_{0};
};

std::shared_ptr<ExternalModel> bridge_from_parameters(const nlohmann::json& params);

/// Connects to an external model for a feature space of `num_features`.
/// The threshold is left at 0.5 until calibrated.
ScoredModel connect_external_model(const BridgeConfig& config, std::size_t num_features);

}  // namespace modeldx
