#include "modeldx/service.hpp"

#include <charconv>
#include <random>

#include <httplib.h>

#include "modeldx/hashing.hpp"
#include "modeldx/inspector.hpp"
#include "modeldx/metrics.hpp"

namespace modeldx {

namespace {

ApiResponse error(int status, std::string code, std::string message) {
  return {status, {{"code", std::move(code)}, {"message", std::move(message)}}};
}

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    if (path[pos] == '/') {
      ++pos;
      continue;
    }
    auto next = path.find('/', pos);
    if (next == std::string_view::npos) next = path.size();
    parts.push_back(path.substr(pos, next - pos));
    pos = next;
  }
  return parts;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(',', pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) return out;
    pos = next + 1;
  }
}

template <typename T>
T parse_param(std::string_view text, std::string_view what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw FilterError("bad " + std::string(what) + " '" + std::string(text) + "'");
  return value;
}

double parse_double(std::string_view text, std::string_view what) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FilterError("bad " + std::string(what));
    return v;
  } catch (const std::logic_error&) {
    throw FilterError("bad " + std::string(what) + " '" + std::string(text) + "'");
  }
}

FeatureSet parse_key(std::string_view text) {
  FeatureSet key;
  if (text == "-") return key;
  for (auto part : split_commas(text)) key.push_back(parse_param<FeatureIndex>(part, "group key"));
  std::sort(key.begin(), key.end());
  key.erase(std::unique(key.begin(), key.end()), key.end());
  return key;
}

std::string new_token() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return hex64(rng()) + hex64(rng());
}

std::string param(const QueryParams& query, std::string_view name, std::string fallback = {}) {
  auto it = query.find(name);
  return it == query.end() ? fallback : it->second;
}

}  // namespace

void Service::add_dataset(const std::string& id, SparseDataset dataset) {
  auto shared = std::make_shared<const SparseDataset>(std::move(dataset));
  auto hash = dataset_hash(*shared);
  std::unique_lock lock(mutex_);
  datasets_[id] = {std::move(shared), std::move(hash)};
}

void Service::add_model(const std::string& id, ScoredModel model) {
  auto hash = model_hash(model);
  std::unique_lock lock(mutex_);
  models_[id] = {std::move(model), std::move(hash)};
}

void Service::add_run(const std::string& id, std::vector<Explanation> explanations, RunManifest manifest) {
  std::unique_lock lock(mutex_);
  runs_[id] = {std::make_shared<const std::vector<Explanation>>(std::move(explanations)), std::move(manifest)};
}

std::size_t Service::session_count() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

ApiResponse Service::handle(std::string_view method, std::string_view path, const QueryParams& query,
                            std::string_view body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() == 1 && method == "GET") {
      std::shared_lock lock(mutex_);
      nlohmann::json out = nlohmann::json::array();
      if (parts[0] == "datasets") {
        for (const auto& [id, d] : datasets_)
          out.push_back({{"id", id},
                         {"hash", d.hash},
                         {"items", d.dataset->size()},
                         {"features", d.dataset->num_features()},
                         {"train_items", d.dataset->indices_of(Split::train).size()},
                         {"test_items", d.dataset->indices_of(Split::test).size()}});
        return {200, out};
      }
      if (parts[0] == "models") {
        for (const auto& [id, m] : models_)
          out.push_back({{"id", id},
                         {"name", m.model.name},
                         {"kind", m.model.predictor->kind()},
                         {"threshold", m.model.threshold},
                         {"hash", m.hash}});
        return {200, out};
      }
      if (parts[0] == "runs") {
        for (const auto& [id, r] : runs_) out.push_back({{"id", id}, {"manifest", to_json(r.manifest)}});
        return {200, out};
      }
    }
    if (parts.size() == 1 && parts[0] == "sessions" && method == "POST") return create_session(body);
    if (parts.size() >= 3 && parts[0] == "sessions") {
      auto session = find_session(parts[1]);
      if (!session) return error(401, "unauthorized", "unknown or expired session token");
      std::vector<std::string_view> rest(parts.begin() + 2, parts.end());
      std::lock_guard lock(session->mutex);
      return session_request(*session, method, rest, query, body);
    }
    return error(404, "not_found", "no route for " + std::string(method) + " " + std::string(path));
  } catch (const FilterError& e) {
    return error(400, "bad_request", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error(400, "bad_request", std::string("malformed JSON: ") + e.what());
  } catch (const IntegrityError& e) {
    return error(500, "integrity", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

std::shared_ptr<Service::Session> Service::find_session(std::string_view id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const Service::Analysis> Service::analysis_for(const std::string& dataset_id,
                                                               const std::string& model_id,
                                                               const std::string& run_id) {
  const std::string key = dataset_id + '\n' + model_id + '\n' + run_id;
  {
    std::shared_lock lock(mutex_);
    if (auto it = analyses_.find(key); it != analyses_.end()) return it->second;
  }
  std::shared_ptr<const SparseDataset> dataset;
  ScoredModel model;
  std::shared_ptr<const std::vector<Explanation>> explanations;
  {
    std::shared_lock lock(mutex_);
    dataset = datasets_.at(dataset_id).dataset;
    model = models_.at(model_id).model;
    explanations = runs_.at(run_id).explanations;
  }
  auto predictions = predict_all(model, *dataset);
  std::vector<PredictionRecord> train, test;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    (dataset->splits()[i] == Split::train ? train : test).push_back(predictions[i]);

  auto analysis = std::make_shared<Analysis>();
  analysis->summary = summary_json(train, test, model.threshold);
  analysis->data = std::make_shared<const DiagnosticData>(dataset, std::move(predictions), *explanations);

  std::unique_lock lock(mutex_);
  auto [it, inserted] = analyses_.emplace(key, std::move(analysis));
  return it->second;
}

ApiResponse Service::create_session(std::string_view body) {
  const auto request = nlohmann::json::parse(body.empty() ? std::string_view("{}") : body);
  const auto dataset_id = request.value("dataset", "");
  const auto model_id = request.value("model", "");
  const auto run_id = request.value("run", "");
  {
    std::shared_lock lock(mutex_);
    auto d = datasets_.find(dataset_id);
    if (d == datasets_.end()) return error(404, "not_found", "unknown dataset '" + dataset_id + "'");
    auto m = models_.find(model_id);
    if (m == models_.end()) return error(404, "not_found", "unknown model '" + model_id + "'");
    auto r = runs_.find(run_id);
    if (r == runs_.end()) return error(404, "not_found", "unknown run '" + run_id + "'");
    if (r->second.manifest.dataset_hash != d->second.hash)
      return error(409, "conflict", "run '" + run_id + "' was generated for a different dataset");
    if (r->second.manifest.model_hash != m->second.hash)
      return error(409, "conflict", "run '" + run_id + "' was generated for a different model");
  }
  auto analysis = analysis_for(dataset_id, model_id, run_id);
  auto session = std::make_shared<Session>(analysis);
  auto token = new_token();
  const auto items = session->state.current().size();
  {
    std::unique_lock lock(mutex_);
    sessions_.emplace(token, std::move(session));
  }
  return {200, {{"session", token}, {"depth", 0}, {"items", items}}};
}

nlohmann::json Service::stack_json(const SessionState& state) const {
  nlohmann::json stack = nlohmann::json::array();
  for (std::size_t d = 0; d < state.stack().size(); ++d) {
    const auto& entry = state.stack()[d];
    stack.push_back({{"depth", d},
                     {"filter", entry.filter ? to_json(*entry.filter) : nlohmann::json(nullptr)},
                     {"size", entry.items.size()}});
  }
  return {{"depth", state.depth()}, {"stack", std::move(stack)}};
}

ApiResponse Service::session_request(Session& session, std::string_view method,
                                     const std::vector<std::string_view>& rest, const QueryParams& query,
                                     std::string_view body) {
  if (method == "GET" && rest.size() == 1 && rest[0] == "summary") return {200, session.analysis->summary};
  if (method == "GET" && rest.size() == 1 && rest[0] == "filters") return {200, stack_json(session.state)};
  if (method == "GET" && rest.size() == 1 && rest[0] == "groups") return list_groups(session, query);
  if (method == "GET" && rest.size() == 3 && rest[0] == "groups" && rest[2] == "matrix")
    return get_matrix(session, rest[1], query);
  if (method == "POST" && rest.size() == 1 && rest[0] == "filters") {
    const auto filter = filter_from_json(nlohmann::json::parse(body));
    session.state.push(filter);
    return {200, stack_json(session.state)};
  }
  if (method == "POST" && rest.size() == 2 && rest[0] == "filters" && rest[1] == "pop") {
    const auto request = nlohmann::json::parse(body);
    if (!request.contains("depth") || !request["depth"].is_number_unsigned())
      throw FilterError("pop needs a non-negative integer 'depth'");
    session.state.pop_to(request["depth"].get<std::size_t>());
    return {200, stack_json(session.state)};
  }
  return error(404, "not_found", "no such session resource");
}

ApiResponse Service::list_groups(Session& session, const QueryParams& query) {
  std::vector<SortKey> spec = session.state.sort_spec();
  if (const auto sort = param(query, "sort"); !sort.empty()) {
    spec.clear();
    const auto metrics = split_commas(sort);
    const auto dirs = split_commas(param(query, "dir"));
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      SortKey key{parse_metric(metrics[i]), SortDirection::descending};
      if (i < dirs.size()) {
        if (dirs[i] == "asc") key.direction = SortDirection::ascending;
        else if (dirs[i] != "desc") throw FilterError("sort direction must be asc or desc");
      }
      spec.push_back(key);
    }
  }
  const auto page = parse_param<std::size_t>(param(query, "page", "0"), "page");
  const auto page_size = parse_param<std::size_t>(param(query, "page_size", "50"), "page_size");
  if (page_size == 0) throw FilterError("page_size must be positive");

  const auto& data = session.state.data();
  auto groups = group_explanations(data, session.state.current());
  sort_groups(groups, spec, data.dataset());

  ConfusionMatrix overall;
  for (const auto& g : groups) {
    overall.tp += g.counts.tp;
    overall.fp += g.counts.fp;
    overall.tn += g.counts.tn;
    overall.fn += g.counts.fn;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = page * page_size; i < groups.size() && i < (page + 1) * page_size; ++i)
    rows.push_back(to_json(groups[i], data.dataset()));

  nlohmann::json sort_json = nlohmann::json::array();
  for (const auto& k : spec)
    sort_json.push_back({{"metric", to_string(k.metric)},
                         {"dir", k.direction == SortDirection::ascending ? "asc" : "desc"}});

  auto out = stack_json(session.state);
  out["current"] = {{"size", overall.total()},
                    {"positive_truth", overall.actual_positive()},
                    {"counts", {{"tp", overall.tp}, {"fp", overall.fp}, {"tn", overall.tn}, {"fn", overall.fn}}}};
  out["total_groups"] = groups.size();
  out["page"] = page;
  out["page_size"] = page_size;
  out["sort"] = std::move(sort_json);
  out["groups"] = std::move(rows);
  return {200, std::move(out)};
}

ApiResponse Service::get_matrix(Session& session, std::string_view key_text, const QueryParams& query) {
  const auto key = parse_key(key_text);
  const auto& data = session.state.data();
  const auto groups = group_explanations(data, session.state.current());
  const auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.key == key; });
  if (it == groups.end()) return error(404, "not_found", "no group with key '" + std::string(key_text) + "'");

  auto matrix = build_matrix(data, it->items);
  if (const auto hide = param(query, "hide"); !hide.empty())
    matrix = hide_nondiscriminative(std::move(matrix), parse_double(hide, "hide threshold"));
  matrix = order_matrix(std::move(matrix), parse_row_order(param(query, "rows", "feature-order")),
                        parse_column_order(param(query, "cols", "importance")), data.dataset());
  auto out = to_json(matrix, data.dataset());
  out["key"] = key;
  out["size"] = it->size();
  return {200, std::move(out)};
}

struct HttpFrontend::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpFrontend::HttpFrontend(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    QueryParams query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const auto reply = impl_->service.handle(req.method, req.path, query, req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  impl_->server.Get(".*", dispatch);
  impl_->server.Post(".*", dispatch);
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() { impl_->server.stop(); }

}  // namespace modeldx
