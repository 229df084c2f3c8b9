#include "kiosk/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "kiosk/corpus.hpp"
#include "kiosk/error.hpp"

namespace kiosk::service {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

Timestamp now_utc() {
  return {std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()};
}

namespace {

void parse_clock(const std::string& s, int& hour, int& minute) {
  int h = -1, m = -1;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d:%d%c", &h, &m, &tail) != 2 || h < 0 || h > 23 || m < 0 || m > 59) {
    throw InvalidArgument("retrain_at must be HH:MM, got \"" + s + "\"");
  }
  hour = h;
  minute = m;
}

void parse_listen(const std::string& s, std::string& host, int& port) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("listen must be host:port");
  host = s.substr(0, colon);
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("listen port is not a number: " + s);
  }
}

}  // namespace

ServiceConfig config_from_json(const json& j, ServiceConfig c) {
  try {
    if (j.contains("listen")) parse_listen(j["listen"].get<std::string>(), c.host, c.port);
    if (j.contains("model")) c.model_path = j["model"].get<std::string>();
    if (j.contains("catalog")) c.catalog_path = j["catalog"].get<std::string>();
    if (j.contains("orders_log")) c.order_log_path = j["orders_log"].get<std::string>();
    if (j.contains("models_root")) c.models_root = j["models_root"].get<std::string>();
    if (j.contains("retrain_at")) {
      parse_clock(j["retrain_at"].get<std::string>(), c.retrain_hour, c.retrain_minute);
    }
    if (j.contains("embedding_window_days")) {
      c.bundle.embedding_window_days = j["embedding_window_days"].get<int>();
    }
    if (j.contains("classifier_window_days")) {
      c.bundle.classifier_window_days = j["classifier_window_days"].get<int>();
    }
    if (j.contains("k")) c.bundle.k = j["k"].get<std::size_t>();
    if (j.contains("slate_size")) c.bundle.slate_size = j["slate_size"].get<std::size_t>();
    if (j.contains("exclude_in_cart")) c.bundle.exclude_in_cart = j["exclude_in_cart"].get<bool>();
    if (j.contains("seed")) c.bundle.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("dim")) c.bundle.embedder.dim = j["dim"].get<std::uint32_t>();
    if (j.contains("epochs")) c.bundle.classifier.epochs = j["epochs"].get<int>();
    if (j.contains("seed_policy")) {
      const auto p = j["seed_policy"].get<std::string>();
      if (p == "fixed") {
        c.seed_policy = SeedPolicy::Fixed;
      } else if (p == "per_run") {
        c.seed_policy = SeedPolicy::PerRun;
      } else {
        throw InvalidArgument("seed_policy must be \"fixed\" or \"per_run\"");
      }
    }
    if (j.contains("tick_seconds")) {
      c.tick_interval = std::chrono::milliseconds(j["tick_seconds"].get<std::int64_t>() * 1000);
    }
    if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
}

void validate_config(const ServiceConfig& c) {
  if (c.bundle.embedding_window_days < 1 || c.bundle.classifier_window_days < 1) {
    throw InvalidArgument("window days must be >= 1");
  }
  if (c.bundle.classifier_window_days > c.bundle.embedding_window_days) {
    throw InvalidArgument("classifier window must not exceed the embedding window");
  }
  if (c.bundle.k < 1 || c.bundle.slate_size < 1) throw InvalidArgument("k and slate_size must be >= 1");
  if (c.port < 0 || c.port > 65535) throw InvalidArgument("port out of range");
  if (c.order_log_path.empty()) throw InvalidArgument("orders_log path is required");
  if (c.threads < 1) throw InvalidArgument("threads must be >= 1");
}

ModelSlot::Snapshot ModelSlot::current() const {
  std::lock_guard lock(mu_);
  return current_;
}

std::uint64_t ModelSlot::swap(std::shared_ptr<const rec::ModelBundle> bundle) {
  if (!bundle) throw InvalidArgument("cannot install an empty bundle");
  std::lock_guard lock(mu_);
  current_ = Snapshot{std::move(bundle), current_.version + 1};
  return current_.version;
}

OrderStore::OrderStore(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  std::string data;
  {
    std::ifstream in(path_, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  if (!data.empty() && data.back() != '\n') {
    const auto keep = data.rfind('\n') == std::string::npos ? 0 : data.rfind('\n') + 1;
    spdlog::warn("{}: cutting torn trailing line ({} bytes)", path_.string(), data.size() - keep);
    fs::resize_file(path_, keep);
    data.resize(keep);
  }
  std::istringstream lines(data);
  std::string line;
  while (std::getline(lines, line)) {
    try {
      const auto j = json::parse(line);
      ids_.insert(j.at("order_id").get<std::string>());
    } catch (const json::exception&) {
      // load_orders reports bad lines
    }
  }
}

bool OrderStore::contains(std::string_view order_id) const {
  std::lock_guard lock(mu_);
  return ids_.contains(order_id);
}

OrderStore::Result OrderStore::append(const Order& order) {
  std::lock_guard lock(mu_);
  if (ids_.contains(order.order_id)) return Result::Duplicate;
  const std::string line = corpus::serialize_order(order) + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open order log " + path_.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error("write to order log failed: " + std::string(std::strerror(err)));
    }
    written += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw Error("fsync of order log failed");
  ids_.insert(order.order_id);
  return Result::Accepted;
}

RetrainScheduler::RetrainScheduler(int hour, int minute, Timestamp last_run)
    : hour_(hour), minute_(minute), last_run_(last_run) {}

Timestamp RetrainScheduler::next_after(Timestamp t) const {
  const std::time_t secs = static_cast<std::time_t>(t.seconds);
  std::tm local{};
  localtime_r(&secs, &local);
  for (int day = 0; day < 3; ++day) {
    std::tm candidate = local;
    candidate.tm_mday += day;
    candidate.tm_hour = hour_;
    candidate.tm_min = minute_;
    candidate.tm_sec = 0;
    candidate.tm_isdst = -1;
    const std::time_t at = std::mktime(&candidate);
    if (at > secs) return {static_cast<std::int64_t>(at)};
  }
  return {t.seconds + kSecondsPerDay};
}

bool RetrainScheduler::due(Timestamp now) const { return next_after(last_run_) <= now; }

void RetrainScheduler::mark(Timestamp now) { last_run_ = now; }

namespace {

HttpResponse json_response(int status, const ordered_json& j) { return {status, j.dump(), "application/json"}; }

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, ordered_json{{"error", message}});
}

}  // namespace

RecommendationService::RecommendationService(ServiceConfig config, Catalog catalog)
    : config_(std::move(config)),
      catalog_(std::move(catalog)),
      menu_json_(catalog_to_json(catalog_).dump()),
      store_(config_.order_log_path),
      scheduler_(config_.retrain_hour, config_.retrain_minute, now_utc()) {
  validate_config(config_);
  if (config_.models_root.empty()) {
    config_.models_root = config_.order_log_path.parent_path() / "models";
  }
}

RecommendationService::~RecommendationService() { stop(); }

bool RecommendationService::load_initial_model() {
  if (config_.model_path.empty()) return false;
  auto bundle = std::make_shared<const rec::ModelBundle>(rec::load_bundle(config_.model_path));
  const auto v = slot_.swap(std::move(bundle));
  spdlog::info("serving {} as version {}", config_.model_path.string(), v);
  return true;
}

HttpResponse RecommendationService::handle_recommend(std::string_view body) {
  std::vector<rec::CartLine> cart;
  try {
    const auto j = json::parse(body);
    if (!j.is_object() || !j.contains("cart") || !j["cart"].is_array()) {
      throw FormatError("body must be an object with a \"cart\" array");
    }
    for (const auto& item : j["cart"]) {
      if (!item.is_object()) throw FormatError("cart items must be objects");
      rec::CartLine line;
      if (!item.contains("name") || !item["name"].is_string()) {
        throw FormatError("cart item needs a string \"name\"");
      }
      line.name = item["name"].get<std::string>();
      if (!item.contains("qty") || !item["qty"].is_number_integer()) {
        throw FormatError("cart item needs an integer \"qty\"");
      }
      const auto qty = item["qty"].get<std::int64_t>();
      if (qty < 1 || qty > 1000) throw FormatError("cart item qty must be in 1..1000");
      line.qty = static_cast<int>(qty);
      if (item.contains("dish_id")) {
        if (!item["dish_id"].is_string()) throw FormatError("\"dish_id\" must be a string");
        line.dish_id = item["dish_id"].get<std::string>();
      }
      cart.push_back(std::move(line));
    }
  } catch (const std::exception& e) {
    ++recommend_rejected_;
    return error_response(400, e.what());
  }

  const auto snapshot = slot_.current();
  if (!snapshot) {
    ++recommend_rejected_;
    return error_response(503, "no model loaded");
  }
  rec::Slate slate;
  try {
    slate = rec::recommend(*snapshot.bundle, cart, catalog_);
  } catch (const InvalidArgument& e) {
    ++recommend_rejected_;
    return error_response(400, e.what());
  }
  ordered_json out;
  out["model_version"] = snapshot.version;
  out["bundle"] = snapshot.bundle->manifest.version;
  auto& items = out["items"] = ordered_json::array();
  for (const auto& item : slate.items) {
    items.push_back({{"dish_id", item.dish_id}, {"name", item.name}, {"score", item.score}});
  }
  ++recommend_ok_;
  return json_response(200, out);
}

HttpResponse RecommendationService::handle_order_submit(std::string_view body) {
  Order order;
  try {
    order = order_from_json(json::parse(body));
  } catch (const std::exception& e) {
    ++orders_rejected_;
    return error_response(400, e.what());
  }
  auto validated = validate_order(order);
  if (!validated.ok()) {
    ++orders_rejected_;
    ordered_json j;
    j["error"] = "invalid order";
    j["violations"] = ordered_json::array();
    for (const auto& v : validated.violations) j["violations"].push_back(describe(v));
    return json_response(400, j);
  }
  if (validated.order->order_id.empty()) {
    ++orders_rejected_;
    return error_response(400, "order_id must be non-empty");
  }
  if (store_.append(*validated.order) == OrderStore::Result::Duplicate) {
    ++orders_rejected_;
    return error_response(409, "duplicate order_id " + validated.order->order_id);
  }
  ++orders_accepted_;
  return json_response(201, ordered_json{{"status", "accepted"}});
}

HttpResponse RecommendationService::handle_menu() const { return {200, menu_json_, "application/json"}; }

HttpResponse RecommendationService::handle_health() const {
  return json_response(200, ordered_json{{"status", "ok"}});
}

HttpResponse RecommendationService::handle_model_info() const {
  const auto snapshot = slot_.current();
  if (!snapshot) return error_response(503, "no model loaded");
  auto j = rec::manifest_to_json(snapshot.bundle->manifest);
  j["model_version"] = snapshot.version;
  return json_response(200, j);
}

HttpResponse RecommendationService::handle_metrics() const {
  std::ostringstream out;
  out << "recommend_ok " << recommend_ok_ << "\n"
      << "recommend_rejected " << recommend_rejected_ << "\n"
      << "orders_accepted " << orders_accepted_ << "\n"
      << "orders_rejected " << orders_rejected_ << "\n"
      << "retrains_ok " << retrains_ok_ << "\n"
      << "retrains_failed " << retrains_failed_ << "\n"
      << "model_version " << slot_.current().version << "\n";
  return {200, out.str(), "text/plain"};
}

fs::path RecommendationService::publish(const rec::ModelBundle& bundle) {
  fs::create_directories(config_.models_root);
  fs::path target = config_.models_root / bundle.manifest.version;
  for (int n = 1; fs::exists(target); ++n) {
    target = config_.models_root / (bundle.manifest.version + "-" + std::to_string(n));
  }
  const fs::path staging =
      config_.models_root / (".staging-" + target.filename().string() + "-" + std::to_string(::getpid()));
  fs::remove_all(staging);
  rec::save_bundle(bundle, staging);
  fs::rename(staging, target);
  return target;
}

std::optional<std::uint64_t> RecommendationService::retrain_now(Timestamp now) {
  std::lock_guard lock(retrain_mu_);
  try {
    rec::BundleConfig cfg = config_.bundle;
    if (config_.seed_policy == SeedPolicy::PerRun) {
      cfg.seed ^= static_cast<std::uint64_t>(now.seconds / kSecondsPerDay) * 0x9E3779B97F4A7C15ull;
    }
    const auto windows =
        rec::training_windows(now, cfg.embedding_window_days, cfg.classifier_window_days);
    const auto vectorizer_log = corpus::load_orders(config_.order_log_path, windows.embedding);
    const auto classifier_log = corpus::slice(vectorizer_log, windows.classifier);
    const auto bundle = rec::train_bundle(vectorizer_log, classifier_log, cfg);
    const auto dir = publish(bundle);
    // Serve what was written, so a bad write cannot reach clients.
    auto loaded = std::make_shared<const rec::ModelBundle>(rec::load_bundle(dir));
    const auto version = slot_.swap(std::move(loaded));
    ++retrains_ok_;
    spdlog::info("retrained: {} now serving as version {}", dir.string(), version);
    return version;
  } catch (const std::exception& e) {
    ++retrains_failed_;
    spdlog::error("retrain failed, keeping version {}: {}", slot_.current().version, e.what());
    return std::nullopt;
  }
}

std::optional<std::uint64_t> RecommendationService::retrain_tick(Timestamp now) {
  {
    std::lock_guard lock(retrain_mu_);
    if (!scheduler_.due(now)) return std::nullopt;
    scheduler_.mark(now);
  }
  return retrain_now(now);
}

void RecommendationService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Post("/v1/recommend", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_recommend(req.body));
  });
  server.Post("/v1/orders", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_order_submit(req.body));
  });
  server.Get("/v1/menu", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_menu());
  });
  server.Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health());
  });
  server.Get("/v1/model/info", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_model_info());
  });
  server.Get("/v1/metrics", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_metrics());
  });
}

int RecommendationService::start() {
  if (server_) throw Error("service already started");
  server_ = std::make_unique<httplib::Server>();
  const std::size_t threads = config_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  mount(*server_);
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    throw Error("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("listening on {}:{}", config_.host, port);
  return port;
}

void RecommendationService::start_scheduler() {
  if (scheduler_thread_.joinable()) return;
  scheduler_thread_ = std::thread([this] {
    std::unique_lock lock(stop_mu_);
    while (!stopping_) {
      if (stop_cv_.wait_for(lock, config_.tick_interval, [this] { return stopping_; })) break;
      lock.unlock();
      retrain_tick(now_utc());
      lock.lock();
    }
  });
}

void RecommendationService::stop() {
  {
    std::lock_guard lock(stop_mu_);
    stopping_ = true;
  }
  stop_cv_.notify_all();
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (scheduler_thread_.joinable()) scheduler_thread_.join();
}

void RecommendationService::wait() {
  std::unique_lock lock(stop_mu_);
  stop_cv_.wait(lock, [this] { return stopping_; });
}

}  // namespace kiosk::service
