#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tealeaf/dataset.hpp"
#include "tealeaf/model.hpp"

namespace httplib {
class Server;
}

namespace tealeaf {

struct ServiceConfig {
  std::filesystem::path checkpoint;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_payload_bytes = 10U * 1024U * 1024U;
  double overlay_alpha = 0.4;
  int worker_threads = 4;

  void validate() const;
};

struct PredictionResponse {
  std::string label;
  double confidence = 0.0;
  // Registry order.
  std::vector<std::pair<std::string, double>> probabilities;
  // Base64 PNG; absent when no explanation was requested.
  std::optional<std::string> gradcam_overlay;
  std::string model_version;
  double latency_ms = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Runs submitted jobs one at a time on a dedicated thread.
class SerialExecutor {
 public:
  SerialExecutor();
  ~SerialExecutor();
  SerialExecutor(const SerialExecutor&) = delete;
  SerialExecutor& operator=(const SerialExecutor&) = delete;

  template <typename Fn>
  auto submit(Fn fn) -> std::future<decltype(fn())> {
    auto task = std::make_shared<std::packaged_task<decltype(fn())()>>(std::move(fn));
    auto fut = task->get_future();
    {
      std::lock_guard lock(mutex_);
      queue_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_one();
    return fut;
  }

 private:
  void loop();

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

std::string base64_encode(std::span<const std::byte> bytes);
std::vector<std::byte> base64_decode(const std::string& text);

/// Model + registry loaded once; handle_predict is safe to call from many
/// threads. Explanations are serialized through a SerialExecutor.
class InferenceService {
 public:
  InferenceService(LoadedCheckpoint checkpoint, std::string model_version, double overlay_alpha = 0.4,
                   std::size_t max_payload_bytes = 10U * 1024U * 1024U);

  /// Throws CorruptCheckpoint / RegistryMismatch from loading.
  static std::unique_ptr<InferenceService> from_checkpoint(const std::filesystem::path& path,
                                                           double overlay_alpha = 0.4,
                                                           std::size_t max_payload_bytes = 10U * 1024U * 1024U);

  /// Throws UnsupportedMediaType, PayloadTooLarge or InternalInferenceError.
  PredictionResponse handle_predict(std::span<const std::byte> image_bytes, bool include_explanation) const;

  nlohmann::ordered_json health() const;
  const ClassRegistry& classes() const noexcept { return registry_; }
  const std::string& model_version() const noexcept { return model_version_; }
  const ClassifierModel& model() const noexcept { return model_; }

 private:
  ClassifierModel model_;
  ClassRegistry registry_;
  std::string model_version_;
  double overlay_alpha_;
  std::size_t max_payload_bytes_;
  mutable SerialExecutor explain_queue_;
};

/// "<architecture>-<16 hex digits of a hash of the checkpoint bytes>".
std::string checkpoint_version(const std::filesystem::path& checkpoint, std::optional<ArchitectureId> arch);

/// HTTP front end for an InferenceService.
///   POST /api/v1/predict   multipart field "image", query explain=true|false
///   GET  /api/v1/health
///   GET  /api/v1/classes
/// Errors are {"error": code, "message": text}.
class HttpServer {
 public:
  HttpServer(const InferenceService& service, ServiceConfig config);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket and returns the port. Throws PortInUse.
  int bind();
  int port() const noexcept { return port_; }

  /// Blocks until stop().
  void run();
  /// run() on a background thread; returns once the server accepts.
  void start();
  void stop();

 private:
  void install_routes();

  const InferenceService& service_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

/// Loads the checkpoint, binds and blocks serving. Installs SIGINT/SIGTERM
/// handlers that stop the server.
void serve(const ServiceConfig& config);

}  // namespace tealeaf
