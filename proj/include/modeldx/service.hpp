#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modeldx/aggregator.hpp"
#include "modeldx/explainer.hpp"
#include "modeldx/model.hpp"
#include "modeldx/sparse_data.hpp"

namespace modeldx {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

using QueryParams = std::map<std::string, std::string, std::less<>>;

/// REST facade over precomputed explanation runs. Datasets, models and runs
/// are registered up front; the service never generates explanations.
///
///   GET  /datasets | /models | /runs
///   POST /sessions                         {"dataset","model","run"}
///   GET  /sessions/{id}/summary
///   GET  /sessions/{id}/groups             ?sort=m1,m2&dir=desc,asc&page=&page_size=
///   POST /sessions/{id}/filters            filter JSON
///   POST /sessions/{id}/filters/pop        {"depth": n}
///   GET  /sessions/{id}/groups/{key}/matrix ?rows=&cols=&hide=
///
/// Group keys in paths are comma separated feature indices; "-" is the empty
/// key. Errors carry {"code", "message"}.
class Service {
 public:
  Service() = default;
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// `dataset` should already carry its train/test split.
  void add_dataset(const std::string& id, SparseDataset dataset);
  void add_model(const std::string& id, ScoredModel model);
  void add_run(const std::string& id, std::vector<Explanation> explanations, RunManifest manifest);

  ApiResponse handle(std::string_view method, std::string_view path, const QueryParams& query,
                     std::string_view body);

  std::size_t session_count() const;

 private:
  struct DatasetEntry {
    std::shared_ptr<const SparseDataset> dataset;
    std::string hash;
  };
  struct ModelEntry {
    ScoredModel model;
    std::string hash;
  };
  struct RunEntry {
    std::shared_ptr<const std::vector<Explanation>> explanations;
    RunManifest manifest;
  };
  struct Analysis {
    std::shared_ptr<const DiagnosticData> data;
    nlohmann::json summary;
  };
  struct Session {
    std::mutex mutex;
    std::shared_ptr<const Analysis> analysis;
    SessionState state;
    Session(std::shared_ptr<const Analysis> a) : analysis(a), state(a->data) {}
  };

  ApiResponse create_session(std::string_view body);
  ApiResponse session_request(Session& session, std::string_view method, const std::vector<std::string_view>& rest,
                              const QueryParams& query, std::string_view body);
  ApiResponse list_groups(Session& session, const QueryParams& query);
  ApiResponse get_matrix(Session& session, std::string_view key, const QueryParams& query);
  nlohmann::json stack_json(const SessionState& state) const;
  std::shared_ptr<Session> find_session(std::string_view id) const;
  std::shared_ptr<const Analysis> analysis_for(const std::string& dataset, const std::string& model,
                                               const std::string& run);

  mutable std::shared_mutex mutex_;
  std::map<std::string, DatasetEntry, std::less<>> datasets_;
  std::map<std::string, ModelEntry, std::less<>> models_;
  std::map<std::string, RunEntry, std::less<>> runs_;
  std::map<std::string, std::shared_ptr<const Analysis>, std::less<>> analyses_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
};

/// HTTP binding of a Service.
class HttpFrontend {
 public:
  explicit HttpFrontend(Service& service);
  ~HttpFrontend();

  /// Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace modeldx
