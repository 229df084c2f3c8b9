#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>

#include "kiosk/domain.hpp"
#include "kiosk/recommender.hpp"

namespace httplib {
class Server;
}

namespace kiosk::service {

enum class SeedPolicy { Fixed, PerRun };

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path model_path;  // initial bundle, may be empty
  std::filesystem::path catalog_path;
  std::filesystem::path order_log_path;
  std::filesystem::path models_root;  // where retrained bundles are published
  int retrain_hour = 3;               // local wall-clock time
  int retrain_minute = 0;
  rec::BundleConfig bundle;
  SeedPolicy seed_policy = SeedPolicy::Fixed;
  std::chrono::milliseconds tick_interval{30'000};
  std::size_t threads = 64;
};

/// Reads the JSON config file layout; absent keys keep their defaults.
ServiceConfig config_from_json(const nlohmann::json& j, ServiceConfig base = {});
ServiceConfig load_config(const std::filesystem::path& path);
/// Throws InvalidArgument.
void validate_config(const ServiceConfig& c);

/// Holds the served bundle. Readers copy a snapshot; a swap replaces it in
/// one step, so every reader sees one complete bundle and its version.
class ModelSlot {
 public:
  struct Snapshot {
    std::shared_ptr<const rec::ModelBundle> bundle;
    std::uint64_t version = 0;
    explicit operator bool() const { return bundle != nullptr; }
  };

  Snapshot current() const;
  /// Installs the bundle and returns its version (previous + 1).
  std::uint64_t swap(std::shared_ptr<const rec::ModelBundle> bundle);

 private:
  mutable std::mutex mu_;
  Snapshot current_;
};

/// Appends orders to the JSONL log, one write per line, fsync'ed before
/// returning. A torn trailing line found at open is cut off.
class OrderStore {
 public:
  enum class Result { Accepted, Duplicate };

  explicit OrderStore(std::filesystem::path path);
  Result append(const Order& order);
  bool contains(std::string_view order_id) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::set<std::string, std::less<>> ids_;
};

/// Fires once each time local wall-clock passes hh:mm.
class RetrainScheduler {
 public:
  RetrainScheduler(int hour, int minute, Timestamp last_run);
  bool due(Timestamp now) const;
  void mark(Timestamp now);
  /// First hh:mm local time strictly after `t`.
  Timestamp next_after(Timestamp t) const;
  Timestamp last_run() const { return last_run_; }

 private:
  int hour_;
  int minute_;
  Timestamp last_run_;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class RecommendationService {
 public:
  RecommendationService(ServiceConfig config, Catalog catalog);
  ~RecommendationService();
  RecommendationService(const RecommendationService&) = delete;
  RecommendationService& operator=(const RecommendationService&) = delete;

  /// Loads config.model_path when set; false when nothing was loaded.
  bool load_initial_model();
  ModelSlot& slot() { return slot_; }
  const ServiceConfig& config() const { return config_; }

  HttpResponse handle_recommend(std::string_view body);
  HttpResponse handle_order_submit(std::string_view body);
  HttpResponse handle_menu() const;
  HttpResponse handle_health() const;
  HttpResponse handle_model_info() const;
  HttpResponse handle_metrics() const;

  /// Retrains when the schedule is due; returns the new slot version.
  /// Failures are logged and the current bundle keeps serving.
  std::optional<std::uint64_t> retrain_tick(Timestamp now);
  /// Unconditional retrain on the windows ending at `now`.
  std::optional<std::uint64_t> retrain_now(Timestamp now);

  /// Binds and serves on background threads; returns the bound port
  /// (useful with port 0).
  int start();
  /// Also runs the retrain scheduler loop until stop().
  void start_scheduler();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  void mount(httplib::Server& server);
  std::filesystem::path publish(const rec::ModelBundle& bundle);

  ServiceConfig config_;
  Catalog catalog_;
  std::string menu_json_;
  ModelSlot slot_;
  OrderStore store_;
  std::mutex retrain_mu_;
  RetrainScheduler scheduler_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  std::thread scheduler_thread_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;

  std::atomic<std::uint64_t> recommend_ok_{0};
  std::atomic<std::uint64_t> recommend_rejected_{0};
  std::atomic<std::uint64_t> orders_accepted_{0};
  std::atomic<std::uint64_t> orders_rejected_{0};
  std::atomic<std::uint64_t> retrains_ok_{0};
  std::atomic<std::uint64_t> retrains_failed_{0};
};

Timestamp now_utc();

}  // namespace kiosk::service
