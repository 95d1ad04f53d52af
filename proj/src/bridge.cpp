#include "modeldx/bridge.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <httplib.h>

namespace modeldx {

namespace {

using Clock = std::chrono::steady_clock;

/// Child process speaking line-delimited JSON on a socketpair wired to its
/// stdin and stdout. A socket rather than pipes lets writes use
/// MSG_NOSIGNAL when the child has died.
class SubprocessTransport final : public BridgeTransport {
 public:
  SubprocessTransport(std::string command, std::chrono::milliseconds timeout)
      : command_(std::move(command)), timeout_(timeout) {}
  ~SubprocessTransport() override { stop(); }

  nlohmann::json exchange(const nlohmann::json& request) override {
    if (pid_ <= 0) start();
    const auto id = request.at("id");
    send_line(request.dump() + "\n");
    const auto deadline = Clock::now() + timeout_;
    while (true) {
      const auto line = read_line(deadline);
      nlohmann::json response;
      try {
        response = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw ModelError("bridge sent malformed JSON: " + line.substr(0, 200));
      }
      // Responses to abandoned (timed-out) requests are skipped.
      if (response.is_object() && response.contains("id") && response["id"] == id) return response;
    }
  }

  void reset() override { stop(); }

 private:
  void start() {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
      throw ModelError(std::string("socketpair failed: ") + std::strerror(errno));
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw ModelError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
    pid_ = pid;
    buffer_.clear();
  }

  void stop() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
    buffer_.clear();
  }

  void send_line(const std::string& line) {
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ModelError(std::string("bridge write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(Clock::time_point deadline) {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        auto line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (remaining.count() <= 0) throw ModelError("bridge timed out after " + std::to_string(timeout_.count()) + " ms");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ModelError(std::string("bridge poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) continue;
      char chunk[65536];
      const auto n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ModelError(std::string("bridge read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ModelError("bridge process closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
  int fd_ = -1;
  pid_t pid_ = -1;
  std::string buffer_;
};

class HttpTransport final : public BridgeTransport {
 public:
  HttpTransport(const std::string& url, std::chrono::milliseconds timeout) : client_(url) {
    if (!client_.is_valid()) throw ModelError("invalid bridge url '" + url + "'");
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client_.set_connection_timeout(sec, usec);
    client_.set_read_timeout(sec, usec);
    client_.set_write_timeout(sec, usec);
  }

  nlohmann::json exchange(const nlohmann::json& request) override {
    auto res = client_.Post("/score", request.dump(), "application/json");
    if (!res) throw ModelError("bridge endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ModelError("bridge endpoint returned HTTP " + std::to_string(res->status));
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw ModelError("bridge endpoint sent malformed JSON");
    }
    if (!response.is_object() || !response.contains("id") || response["id"] != request.at("id"))
      throw ModelError("bridge endpoint response id does not match request");
    return response;
  }

  void reset() override {}

 private:
  httplib::Client client_;
};

}  // namespace

std::unique_ptr<BridgeTransport> make_subprocess_transport(const std::string& command,
                                                           std::chrono::milliseconds timeout) {
  return std::make_unique<SubprocessTransport>(command, timeout);
}

std::unique_ptr<BridgeTransport> make_http_transport(const std::string& url, std::chrono::milliseconds timeout) {
  return std::make_unique<HttpTransport>(url, timeout);
}

ExternalModel::ExternalModel(BridgeConfig config) : config_(std::move(config)) {
  if (config_.command.empty() == config_.url.empty())
    throw ModelError("bridge needs exactly one of a command or a url");
  if (config_.attempts < 1 || config_.max_batch == 0 || config_.connections == 0)
    throw ModelError("invalid bridge configuration");
  for (std::size_t i = 0; i < config_.connections; ++i) {
    auto conn = std::make_unique<Connection>();
    conn->transport = open();
    connections_.push_back(std::move(conn));
  }
}

ExternalModel::~ExternalModel() = default;

std::unique_ptr<BridgeTransport> ExternalModel::open() const {
  if (!config_.command.empty()) return make_subprocess_transport(config_.command, config_.timeout);
  return make_http_transport(config_.url, config_.timeout);
}

double ExternalModel::score(FeatureView active) const {
  const FeatureSet set(active.begin(), active.end());
  return score_batch(std::span<const FeatureSet>(&set, 1)).front();
}

std::vector<double> ExternalModel::score_batch(std::span<const FeatureSet> sets) const {
  std::vector<double> out;
  out.reserve(sets.size());
  auto& conn = *connections_[round_robin_.fetch_add(1) % connections_.size()];
  std::lock_guard lock(conn.mutex);
  for (std::size_t start = 0; start < sets.size(); start += config_.max_batch) {
    const auto len = std::min(config_.max_batch, sets.size() - start);
    const auto chunk = score_chunk(conn, sets.subspan(start, len));
    out.insert(out.end(), chunk.begin(), chunk.end());
  }
  return out;
}

std::vector<double> ExternalModel::score_chunk(Connection& conn, std::span<const FeatureSet> sets) const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& s : sets) items.push_back(s);

  std::string last_error;
  for (int attempt = 0; attempt < config_.attempts; ++attempt) {
    const auto id = next_id_.fetch_add(1);
    try {
      const auto response = conn.transport->exchange({{"id", id}, {"items", items}});
      const auto it = response.find("scores");
      if (it == response.end() || !it->is_array()) throw ModelError("bridge response has no 'scores' array");
      if (it->size() != sets.size())
        throw ModelError("bridge returned " + std::to_string(it->size()) + " scores for " +
                         std::to_string(sets.size()) + " items");
      std::vector<double> scores;
      scores.reserve(sets.size());
      for (const auto& v : *it) {
        if (!v.is_number()) throw ModelError("bridge returned a non-numeric score");
        const double s = v.get<double>();
        if (!(s >= 0.0 && s <= 1.0)) throw ModelError("bridge returned score " + v.dump() + " outside [0, 1]");
        scores.push_back(s);
      }
      return scores;
    } catch (const ModelError& e) {
      last_error = e.what();
      conn.transport->reset();
    }
  }
  throw ModelError("bridge request failed after " + std::to_string(config_.attempts) + " attempts: " + last_error);
}

nlohmann::json ExternalModel::parameters() const {
  nlohmann::json p = {{"timeout_ms", config_.timeout.count()},
                      {"attempts", config_.attempts},
                      {"max_batch", config_.max_batch},
                      {"connections", config_.connections}};
  if (!config_.command.empty()) p["command"] = config_.command;
  if (!config_.url.empty()) p["url"] = config_.url;
  return p;
}

std::shared_ptr<ExternalModel> bridge_from_parameters(const nlohmann::json& params) {
  BridgeConfig config;
  config.command = params.value("command", "");
  config.url = params.value("url", "");
  config.timeout = std::chrono::milliseconds(params.value("timeout_ms", config.timeout.count()));
  config.attempts = params.value("attempts", config.attempts);
  config.max_batch = params.value("max_batch", config.max_batch);
  config.connections = params.value("connections", config.connections);
  return std::make_shared<ExternalModel>(std::move(config));
}

ScoredModel connect_external_model(const BridgeConfig& config, std::size_t num_features) {
  ScoredModel model;
  model.predictor = std::make_shared<ExternalModel>(config);
  model.name = "bridge:" + (config.command.empty() ? config.url : config.command);
  model.num_features = num_features;
  return model;
}

}  // namespace modeldx
