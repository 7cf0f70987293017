#include "batchal/service.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "batchal/error.hpp"
#include "service/session_store.hpp"

namespace batchal {

using nlohmann::json;

std::string_view to_string(SessionPhase phase) noexcept {
  switch (phase) {
    case SessionPhase::Training: return "training";
    case SessionPhase::AwaitingLabels: return "awaiting-labels";
    case SessionPhase::Finished: return "finished";
    case SessionPhase::Failed: return "failed";
  }
  return "unknown";
}

namespace {

std::optional<SessionPhase> parse_phase(std::string_view name) {
  for (const auto p : {SessionPhase::Training, SessionPhase::AwaitingLabels, SessionPhase::Finished,
                       SessionPhase::Failed}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

ApiResponse json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  std::ostringstream out;
  out << std::hex << rng() << rng();
  return out.str();
}

std::string content_type_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".txt") return "text/plain";
  return "application/octet-stream";
}

// Collects per-field diagnostics while reading a create-session body.
class FieldReader {
 public:
  explicit FieldReader(const json& body) : body_(body) {}

  template <typename T>
  std::optional<T> get(const char* field, bool required = false) {
    if (!body_.contains(field) || body_.at(field).is_null()) {
      if (required) add(field, "is required");
      return std::nullopt;
    }
    try {
      return body_.at(field).get<T>();
    } catch (const json::exception&) {
      add(field, "has the wrong type");
      return std::nullopt;
    }
  }

  void add(const std::string& field, const std::string& message) {
    errors_.push_back({{"field", field}, {"message", message}});
  }

  bool ok() const { return errors_.empty(); }
  const json& errors() const { return errors_; }

 private:
  const json& body_;
  json errors_ = json::array();
};

}  // namespace

struct AnnotationService::Session {
  std::string id;
  RunConfig config;
  std::string dataset_path;
  std::optional<int> num_classes_override;
  std::vector<std::string> class_names;
  std::shared_ptr<const Dataset> dataset;

  std::mutex mutex;
  std::optional<ActiveLearningCycle> cycle;
  SessionPhase phase = SessionPhase::Training;
  std::optional<TrainedModel> model;
  std::vector<SampleId> pending_ids;
  std::map<SampleId, ClassIndex> pending_labels;
  std::map<SampleId, std::vector<double>> pending_probabilities;
  std::vector<SampleId> revealed_ids;  // batch whose retraining is underway
  double propose_elapsed = 0.0;
  std::string failure;
};

struct AnnotationService::Impl {
  explicit Impl(ServiceConfig c) : config(std::move(c)) {}

  ServiceConfig config;

  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  std::mutex datasets_mutex;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets;

  // Training jobs; each session has at most one queued or running job.
  std::mutex jobs_mutex;
  std::condition_variable jobs_cv;
  std::condition_variable idle_cv;
  std::deque<std::shared_ptr<Session>> queue;
  std::size_t running = 0;
  bool stopping = false;
  std::vector<std::thread> workers;

  httplib::Server server;
  std::thread server_thread;

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    const auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  std::shared_ptr<const Dataset> load_dataset(const std::string& path, std::optional<int> num_classes) {
    const std::string key = path + "#" + (num_classes ? std::to_string(*num_classes) : "");
    std::lock_guard lock(datasets_mutex);
    if (const auto it = datasets.find(key); it != datasets.end()) return it->second;
    IngestOptions options;
    options.num_classes = num_classes;
    auto dataset = std::make_shared<const Dataset>(ingest_csv(path, options));
    datasets.emplace(key, dataset);
    return dataset;
  }

  std::filesystem::path session_dir(const Session& s) const { return config.store_dir / s.id; }

  // Caller holds s.mutex.
  void checkpoint(const Session& s) {
    json j;
    j["session_id"] = s.id;
    j["config"] = json::parse(run_config_json(std::array{s.config.strategy}, s.config, {"csv", s.dataset_path}));
    j["dataset_path"] = s.dataset_path;
    j["num_classes"] = s.num_classes_override ? json(*s.num_classes_override) : json(nullptr);
    j["class_names"] = s.class_names;
    j["phase"] = std::string(to_string(s.phase));
    j["pending_ids"] = s.pending_ids;
    json labels = json::array();
    for (const auto& [id, label] : s.pending_labels) labels.push_back({id, label});
    j["pending_labels"] = labels;
    json probabilities = json::array();
    for (const auto& [id, p] : s.pending_probabilities) probabilities.push_back({id, p});
    j["pending_probabilities"] = probabilities;
    j["revealed_ids"] = s.revealed_ids;
    j["propose_elapsed"] = s.propose_elapsed;
    j["failure"] = s.failure;
    j["cycle"] = store::cycle_to_json(s.cycle->state());

    const auto dir = session_dir(s);
    std::filesystem::create_directories(dir);
    if (s.model) store::write_atomically(dir / "model.json", serialize_model(*s.model));
    store::write_atomically(dir / "session.json", j.dump());
  }

  std::shared_ptr<Session> restore(const std::filesystem::path& dir) {
    const json j = json::parse(store::read_file(dir / "session.json"));
    auto s = std::make_shared<Session>();
    s->id = j.at("session_id").get<std::string>();
    s->config = parse_run_config(j.at("config").dump()).config;
    s->config.label_source = LabelSource::HumanSession;
    s->dataset_path = j.at("dataset_path").get<std::string>();
    if (!j.at("num_classes").is_null()) s->num_classes_override = j.at("num_classes").get<int>();
    s->class_names = j.at("class_names").get<std::vector<std::string>>();
    s->dataset = load_dataset(s->dataset_path, s->num_classes_override);
    const auto phase = parse_phase(j.at("phase").get<std::string>());
    if (!phase) fail(ErrorKind::Integrity, "unknown session phase in " + (dir / "session.json").string());
    s->phase = *phase;
    s->pending_ids = j.at("pending_ids").get<std::vector<SampleId>>();
    for (const auto& pair : j.at("pending_labels")) {
      s->pending_labels.emplace(pair.at(0).get<SampleId>(), pair.at(1).get<ClassIndex>());
    }
    for (const auto& pair : j.at("pending_probabilities")) {
      s->pending_probabilities.emplace(pair.at(0).get<SampleId>(), pair.at(1).get<std::vector<double>>());
    }
    s->revealed_ids = j.at("revealed_ids").get<std::vector<SampleId>>();
    s->propose_elapsed = j.at("propose_elapsed").get<double>();
    s->failure = j.at("failure").get<std::string>();
    s->cycle.emplace(*s->dataset, s->config, store::cycle_from_json(j.at("cycle")));
    if (std::filesystem::exists(dir / "model.json")) {
      s->model = deserialize_model(store::read_file(dir / "model.json"));
    }
    return s;
  }

  void enqueue(std::shared_ptr<Session> s) {
    {
      std::lock_guard lock(jobs_mutex);
      queue.push_back(std::move(s));
    }
    jobs_cv.notify_one();
  }

  void worker_loop() {
    for (;;) {
      std::shared_ptr<Session> s;
      {
        std::unique_lock lock(jobs_mutex);
        jobs_cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        s = std::move(queue.front());
        queue.pop_front();
        ++running;
      }
      train_round(*s);
      {
        std::lock_guard lock(jobs_mutex);
        --running;
      }
      idle_cv.notify_all();
    }
  }

  // Trains on a copy of the cycle so status reads never wait on training.
  void train_round(Session& s) {
    std::unique_lock lock(s.mutex);
    if (s.phase != SessionPhase::Training) return;
    ActiveLearningCycle work = *s.cycle;
    const auto revealed = s.revealed_ids;
    const double elapsed_before = s.propose_elapsed;
    lock.unlock();

    try {
      TrainedModel model;
      work.train_and_evaluate(revealed, elapsed_before, &model);
      const auto start = std::chrono::steady_clock::now();
      ScoredBatch batch;
      PredictionTensor probabilities;
      if (!work.finished()) {
        batch = work.propose(model);
        probabilities =
            predict_deterministic(model, gather_features(*s.dataset, batch.selected_ids), batch.selected_ids);
      }
      const double propose_elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

      lock.lock();
      s.cycle = std::move(work);
      s.model = std::move(model);
      s.revealed_ids.clear();
      s.pending_labels.clear();
      s.pending_probabilities.clear();
      s.pending_ids = batch.selected_ids;
      if (batch.selected_ids.empty()) {
        s.phase = SessionPhase::Finished;
        s.propose_elapsed = 0.0;
      } else {
        s.phase = SessionPhase::AwaitingLabels;
        s.propose_elapsed = propose_elapsed;
        for (std::size_t u = 0; u < batch.selected_ids.size(); ++u) {
          const auto row = probabilities.row(0, u);
          s.pending_probabilities.emplace(batch.selected_ids[u], std::vector<double>(row.begin(), row.end()));
        }
      }
      checkpoint(s);
    } catch (const std::exception& e) {
      if (!lock.owns_lock()) lock.lock();
      s.phase = SessionPhase::Failed;
      s.failure = e.what();
      try {
        checkpoint(s);
      } catch (const std::exception& inner) {
        warn(std::string("checkpoint of failed session ") + s.id + " failed: " + inner.what());
      }
    }
  }

  // Caller holds s.mutex.
  json status_json(const Session& s) const {
    const CycleState& state = s.cycle->state();
    json metrics = json::array();
    for (const RoundRecord& r : state.records) metrics.push_back(store::record_to_json(r));
    std::size_t round = state.records.size();
    if (s.phase == SessionPhase::Finished && round > 0) --round;
    json j;
    j["session_id"] = s.id;
    j["phase"] = std::string(to_string(s.phase));
    j["round"] = round;
    j["labels_spent"] = state.pool.labels_spent;
    j["budget"] = state.pool.budget;
    j["num_classes"] = state.pool.num_classes;
    j["class_names"] = s.class_names;
    j["strategy"] = std::string(to_string(s.config.strategy));
    j["pending_count"] = s.pending_ids.size();
    j["labeled_pending_count"] = s.pending_labels.size();
    j["metrics"] = std::move(metrics);
    if (s.phase == SessionPhase::Failed) j["failure"] = s.failure;
    return j;
  }

  static ApiResponse wrong_phase(const Session& s, std::string_view expected) {
    return json_response(409, json{{"error", "session is " + std::string(to_string(s.phase)) + ", expected " +
                                                 std::string(expected)},
                                   {"phase", std::string(to_string(s.phase))}});
  }
};

AnnotationService::AnnotationService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  std::filesystem::create_directories(impl_->config.store_dir);
  for (const auto& entry : std::filesystem::directory_iterator(impl_->config.store_dir)) {
    if (!entry.is_directory() || !std::filesystem::exists(entry.path() / "session.json")) continue;
    try {
      auto s = impl_->restore(entry.path());
      impl_->sessions.emplace(s->id, s);
      if (s->phase == SessionPhase::Training) impl_->enqueue(s);
    } catch (const std::exception& e) {
      warn("skipping session in " + entry.path().string() + ": " + e.what());
    }
  }
  const unsigned workers = std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
  for (unsigned i = 0; i < workers; ++i) impl_->workers.emplace_back([this] { impl_->worker_loop(); });
}

AnnotationService::~AnnotationService() {
  stop();
  {
    std::lock_guard lock(impl_->jobs_mutex);
    impl_->stopping = true;
  }
  impl_->jobs_cv.notify_all();
  for (auto& t : impl_->workers) t.join();
}

ApiResponse AnnotationService::create_session(std::string_view body_text) {
  json body;
  try {
    body = json::parse(body_text);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  if (!body.is_object()) return error_response(400, "request body must be a JSON object");

  FieldReader fields(body);
  const auto dataset_path = fields.get<std::string>("dataset", true);
  const auto strategy_name = fields.get<std::string>("strategy");
  const auto initial = fields.get<std::size_t>("initial_labeled");
  const auto batch = fields.get<std::size_t>("query_batch");
  const auto budget = fields.get<std::size_t>("budget");
  const auto val_frac = fields.get<double>("validation_fraction");
  const auto seed = fields.get<Seed>("seed");
  const auto epochs = fields.get<std::size_t>("epochs");
  const auto mc_passes = fields.get<std::size_t>("mc_passes");
  const auto widths = fields.get<std::vector<std::size_t>>("hidden_widths");
  const auto dropout = fields.get<double>("dropout_rate");
  const auto rate = fields.get<double>("learning_rate");
  const auto batch_size = fields.get<std::size_t>("batch_size");
  const auto num_classes = fields.get<int>("num_classes");
  const auto class_names = fields.get<std::vector<std::string>>("class_names");

  RunConfig config;
  config.label_source = LabelSource::HumanSession;
  config.repetitions = 1;
  config.strategy = Strategy::Entropy;
  if (strategy_name) {
    if (const auto s = parse_strategy(*strategy_name)) {
      config.strategy = *s;
    } else {
      fields.add("strategy", "must be one of " + strategy_names());
    }
  }
  if (initial) config.initial_labeled = *initial;
  if (batch) config.query_batch = *batch;
  if (budget) config.budget = *budget;
  if (val_frac) config.validation_fraction = *val_frac;
  if (seed) {
    config.master_seed = *seed;
    config.model.weight_init_seed = *seed;
  }
  if (epochs) config.model.epochs = *epochs;
  if (mc_passes) config.model.mc_passes = *mc_passes;
  if (widths) config.model.hidden_widths = *widths;
  if (dropout) config.model.dropout_rate = *dropout;
  if (rate) config.model.learning_rate = *rate;
  if (batch_size) config.model.batch_size = *batch_size;

  if (config.initial_labeled < 1) fields.add("initial_labeled", "must be >= 1");
  if (config.initial_labeled > config.budget) fields.add("initial_labeled", "must not exceed budget");
  if (config.query_batch < 1) fields.add("query_batch", "must be >= 1");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
    fields.add("validation_fraction", "must lie in [0, 1)");
  }
  if (!fields.ok()) return json_response(400, json{{"error", "invalid session config"}, {"fields", fields.errors()}});

  auto s = std::make_shared<Session>();
  s->dataset_path = *dataset_path;
  s->num_classes_override = num_classes;
  try {
    s->dataset = impl_->load_dataset(*dataset_path, num_classes);
  } catch (const Error& e) {
    fields.add("dataset", e.what());
    return json_response(400, json{{"error", "cannot load dataset"}, {"fields", fields.errors()}});
  }
  config.model.input_dim = s->dataset->dimension;
  config.model.num_classes = s->dataset->num_classes;
  if (class_names) {
    if (class_names->size() != static_cast<std::size_t>(config.model.num_classes)) {
      fields.add("class_names", "needs one name per class");
      return json_response(400, json{{"error", "invalid session config"}, {"fields", fields.errors()}});
    }
    s->class_names = *class_names;
  } else {
    for (int k = 0; k < config.model.num_classes; ++k) s->class_names.push_back("class " + std::to_string(k));
  }
  try {
    config.validate();
    s->cycle.emplace(*s->dataset, config, std::size_t{0});
  } catch (const Error& e) {
    fields.add("config", e.what());
    return json_response(400, json{{"error", "invalid session config"}, {"fields", fields.errors()}});
  }
  s->config = config;

  {
    std::lock_guard lock(impl_->sessions_mutex);
    do {
      s->id = new_session_id();
    } while (impl_->sessions.contains(s->id));
    impl_->sessions.emplace(s->id, s);
  }
  {
    std::lock_guard lock(s->mutex);
    try {
      impl_->checkpoint(*s);
    } catch (const Error& e) {
      return error_response(500, e.what());
    }
  }
  impl_->enqueue(s);
  return json_response(201, json{{"session_id", s->id}, {"phase", "training"}});
}

ApiResponse AnnotationService::get_status(const std::string& session_id) {
  const auto s = impl_->find(session_id);
  if (!s) return error_response(404, "unknown session " + session_id);
  std::lock_guard lock(s->mutex);
  return json_response(200, impl_->status_json(*s));
}

ApiResponse AnnotationService::get_metrics(const std::string& session_id) {
  const auto s = impl_->find(session_id);
  if (!s) return error_response(404, "unknown session " + session_id);
  std::lock_guard lock(s->mutex);
  json records = json::array();
  for (const RoundRecord& r : s->cycle->state().records) records.push_back(store::record_to_json(r));
  return json_response(200, json{{"session_id", s->id},
                                 {"records", std::move(records)},
                                 {"class_totals", s->cycle->class_totals()},
                                 {"class_names", s->class_names}});
}

ApiResponse AnnotationService::get_query_batch(const std::string& session_id) {
  const auto s = impl_->find(session_id);
  if (!s) return error_response(404, "unknown session " + session_id);
  std::lock_guard lock(s->mutex);
  if (s->phase != SessionPhase::AwaitingLabels) return Impl::wrong_phase(*s, "awaiting-labels");
  json items = json::array();
  for (const SampleId id : s->pending_ids) {
    if (s->pending_labels.contains(id)) continue;
    const auto& payload = s->dataset->samples.at(id).payload_ref;
    json item;
    item["id"] = id;
    item["payload_ref"] = payload ? json(*payload) : json(nullptr);
    item["payload_url"] = payload ? json("/payloads/" + std::to_string(id) + "?session=" + s->id) : json(nullptr);
    item["probabilities"] = s->pending_probabilities.at(id);
    items.push_back(std::move(item));
  }
  return json_response(200, json{{"session_id", s->id},
                                 {"round", s->cycle->next_round()},
                                 {"pending_total", s->pending_ids.size()},
                                 {"items", std::move(items)}});
}

ApiResponse AnnotationService::submit_labels(const std::string& session_id, std::string_view body_text) {
  const auto s = impl_->find(session_id);
  if (!s) return error_response(404, "unknown session " + session_id);
  json body;
  try {
    body = json::parse(body_text);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  if (!body.is_object() || !body.contains("labels") || !body.at("labels").is_array()) {
    return error_response(400, "body must be {\"labels\": [{\"id\": ..., \"label\": ...}, ...]}");
  }

  std::unique_lock lock(s->mutex);
  if (s->phase != SessionPhase::AwaitingLabels) return Impl::wrong_phase(*s, "awaiting-labels");

  const std::set<SampleId> pending(s->pending_ids.begin(), s->pending_ids.end());
  const int num_classes = s->cycle->pool().num_classes;
  std::size_t accepted = 0;
  json rejected = json::array();
  for (const auto& item : body.at("labels")) {
    const json id_field = item.is_object() && item.contains("id") ? item.at("id") : json(nullptr);
    if (!item.is_object() || !id_field.is_number_integer() || !item.contains("label") ||
        !item.at("label").is_number_integer()) {
      rejected.push_back({{"id", id_field}, {"reason", "item needs integer id and label"}});
      continue;
    }
    const auto raw_id = id_field.get<std::int64_t>();
    const auto label = item.at("label").get<std::int64_t>();
    if (raw_id < 0 || !pending.contains(static_cast<SampleId>(raw_id))) {
      rejected.push_back({{"id", raw_id}, {"reason", "not in the pending batch"}});
      continue;
    }
    if (label < 0 || label >= num_classes) {
      rejected.push_back(
          {{"id", raw_id}, {"reason", "label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")"}});
      continue;
    }
    s->pending_labels[static_cast<SampleId>(raw_id)] = static_cast<ClassIndex>(label);
    ++accepted;
  }

  bool schedule = false;
  if (s->pending_labels.size() == s->pending_ids.size()) {
    std::vector<std::pair<SampleId, ClassIndex>> labels;
    for (const SampleId id : s->pending_ids) labels.emplace_back(id, s->pending_labels.at(id));
    try {
      s->cycle->commit(labels);
    } catch (const Error& e) {
      return error_response(409, e.what());
    }
    s->revealed_ids = s->pending_ids;
    s->pending_ids.clear();
    s->pending_labels.clear();
    s->pending_probabilities.clear();
    s->phase = SessionPhase::Training;
    schedule = true;
  }
  try {
    impl_->checkpoint(*s);
  } catch (const Error& e) {
    warn(std::string("checkpoint failed: ") + e.what());
  }
  const std::string phase(to_string(s->phase));
  lock.unlock();
  if (schedule) impl_->enqueue(s);
  return json_response(200, json{{"accepted", accepted}, {"rejected", std::move(rejected)}, {"phase", phase}});
}

ApiResponse AnnotationService::get_payload(SampleId sample_id, const std::optional<std::string>& session_id) {
  std::shared_ptr<const Dataset> dataset;
  if (session_id) {
    const auto s = impl_->find(*session_id);
    if (!s) return error_response(404, "unknown session " + *session_id);
    dataset = s->dataset;
  } else if (impl_->config.default_dataset) {
    try {
      dataset = impl_->load_dataset(impl_->config.default_dataset->string(), std::nullopt);
    } catch (const Error& e) {
      return error_response(500, e.what());
    }
  } else {
    return error_response(404, "no dataset to resolve payloads against; pass ?session=<id>");
  }
  if (sample_id >= dataset->size()) return error_response(404, "unknown sample " + std::to_string(sample_id));
  const auto& ref = dataset->samples[sample_id].payload_ref;
  if (!ref) return error_response(404, "sample " + std::to_string(sample_id) + " has no payload");

  const std::filesystem::path relative(*ref);
  std::error_code ec;
  const auto root = std::filesystem::weakly_canonical(impl_->config.payload_root, ec);
  if (ec) return error_response(500, "payload root is not accessible");
  if (relative.is_absolute()) return error_response(403, "payload path escapes the payload root");
  const auto target = std::filesystem::weakly_canonical(root / relative, ec);
  if (ec) return error_response(404, "payload not found");
  const auto [root_end, target_it] = std::mismatch(root.begin(), root.end(), target.begin(), target.end());
  if (root_end != root.end()) return error_response(403, "payload path escapes the payload root");
  if (!std::filesystem::is_regular_file(target, ec)) return error_response(404, "payload not found");
  try {
    return {200, store::read_file(target), content_type_for(target)};
  } catch (const Error&) {
    return error_response(404, "payload not readable");
  }
}

void AnnotationService::wait_idle() {
  std::unique_lock lock(impl_->jobs_mutex);
  impl_->idle_cv.wait(lock, [&] { return impl_->queue.empty() && impl_->running == 0; });
}

namespace {

void reply(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_header("Access-Control-Allow-Origin", "*");
  res.set_content(api.body, api.content_type);
}

}  // namespace

static void register_routes(httplib::Server& server, AnnotationService& service) {
  // SO_REUSEPORT would let a second server share a busy port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.create_session(req.body));
  });
  server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_status(req.matches[1]));
  });
  server.Get(R"(/sessions/([^/]+)/query)", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_query_batch(req.matches[1]));
  });
  server.Post(R"(/sessions/([^/]+)/labels)", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.submit_labels(req.matches[1], req.body));
  });
  server.Get(R"(/sessions/([^/]+)/metrics)", [&](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.get_metrics(req.matches[1]));
  });
  server.Get(R"(/payloads/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> session;
    if (req.has_param("session")) session = req.get_param_value("session");
    const std::string digits = req.matches[1];
    if (digits.size() > 10 || std::stoull(digits) > UINT32_MAX) {
      reply(res, error_response(404, "unknown sample " + digits));
      return;
    }
    reply(res, service.get_payload(static_cast<SampleId>(std::stoull(digits)), session));
  });
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

int AnnotationService::start(const std::string& host, int port) {
  register_routes(impl_->server, *this);
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) fail(ErrorKind::Io, "cannot listen on " + host + ":0");
  } else if (!impl_->server.bind_to_port(host, port)) {
    fail(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void AnnotationService::listen(const std::string& host, int port) {
  register_routes(impl_->server, *this);
  if (!impl_->server.bind_to_port(host, port)) {
    fail(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
  impl_->server.listen_after_bind();
}

void AnnotationService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace batchal
