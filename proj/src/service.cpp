#include "tealeaf/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string_view>

#include <sys/socket.h>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <torch/torch.h>

#include "httplib.h"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"
#include "tealeaf/explain.hpp"
#include "tealeaf/image.hpp"

namespace tealeaf {

using nlohmann::ordered_json;

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) {
    throw Error(ErrorCode::ConfigInvalid, "port must lie in [0, 65535]");
  }
  if (max_payload_bytes == 0) {
    throw Error(ErrorCode::ConfigInvalid, "max_payload_bytes must be positive");
  }
  if (!(overlay_alpha >= 0.0 && overlay_alpha <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "overlay_alpha must lie in [0, 1]");
  }
  if (worker_threads < 1) {
    throw Error(ErrorCode::ConfigInvalid, "worker_threads must be at least 1");
  }
}

ordered_json PredictionResponse::to_json() const {
  ordered_json probs = ordered_json::object();
  for (const auto& [name, p] : probabilities) probs[name] = p;
  ordered_json j = {{"label", label}, {"confidence", confidence}, {"probabilities", std::move(probs)}};
  if (gradcam_overlay) j["gradcam_overlay"] = *gradcam_overlay;
  j["model_version"] = model_version;
  j["latency_ms"] = latency_ms;
  return j;
}

SerialExecutor::SerialExecutor() : worker_([this] { loop(); }) {}

SerialExecutor::~SerialExecutor() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void SerialExecutor::loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    job();
  }
}

std::string base64_encode(std::span<const std::byte> bytes) {
  namespace it = boost::archive::iterators;
  using Encoder = it::base64_from_binary<it::transform_width<const char*, 6, 8>>;
  const auto* begin = reinterpret_cast<const char*>(bytes.data());
  std::string out(Encoder(begin), Encoder(begin + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::byte> base64_decode(const std::string& text) {
  namespace it = boost::archive::iterators;
  using Decoder = it::transform_width<it::binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::string trimmed = text;
  std::size_t padding = 0;
  while (!trimmed.empty() && trimmed.back() == '=') {
    trimmed.pop_back();
    ++padding;
  }
  if (padding > 2 || (trimmed.size() + padding) % 4 != 0) {
    throw Error(ErrorCode::InvalidArgument, "malformed base64 text");
  }
  std::vector<std::byte> out;
  try {
    for (Decoder d(trimmed.cbegin()), end(trimmed.cend()); d != end; ++d) {
      out.push_back(static_cast<std::byte>(*d));
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "malformed base64 text");
  }
  // transform_width may emit a trailing partial byte built from padding bits.
  out.resize(trimmed.size() * 3 / 4);
  return out;
}

std::string checkpoint_version(const std::filesystem::path& checkpoint, std::optional<ArchitectureId> arch) {
  std::ifstream in(checkpoint, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ostringstream os;
  os << (arch ? std::string(to_string(*arch)) : std::string("custom")) << '-' << std::hex << std::setw(16)
     << std::setfill('0') << std::hash<std::string_view>{}(bytes);
  return os.str();
}

InferenceService::InferenceService(LoadedCheckpoint checkpoint, std::string model_version, double overlay_alpha,
                                   std::size_t max_payload_bytes)
    : model_(std::move(checkpoint.model)),
      registry_(std::move(checkpoint.registry)),
      model_version_(std::move(model_version)),
      overlay_alpha_(overlay_alpha),
      max_payload_bytes_(max_payload_bytes) {
  model_.module().eval();
}

std::unique_ptr<InferenceService> InferenceService::from_checkpoint(const std::filesystem::path& path,
                                                                    double overlay_alpha,
                                                                    std::size_t max_payload_bytes) {
  auto loaded = load_checkpoint(path);
  auto version = checkpoint_version(path, loaded.model.architecture());
  return std::make_unique<InferenceService>(std::move(loaded), std::move(version), overlay_alpha, max_payload_bytes);
}

PredictionResponse InferenceService::handle_predict(std::span<const std::byte> image_bytes,
                                                    bool include_explanation) const {
  const auto started = std::chrono::steady_clock::now();
  if (image_bytes.size() > max_payload_bytes_) {
    throw Error(ErrorCode::PayloadTooLarge, "image exceeds " + std::to_string(max_payload_bytes_) + " bytes");
  }
  ImageTensor img;
  try {
    img = preprocess_bytes(image_bytes, model_.preprocess());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UndecodableImage) {
      throw Error(ErrorCode::UnsupportedMediaType, "body is not a decodable JPEG or PNG image");
    }
    throw;
  }

  PredictionResponse r;
  try {
    const auto probs = model_.predict_proba(img.batch())[0].to(torch::kDouble).contiguous();
    const auto best = argmax_lowest(probs);
    const auto* p = probs.data_ptr<double>();
    for (std::size_t c = 0; c < registry_.count(); ++c) {
      r.probabilities.emplace_back(registry_.name(c), p[c]);
    }
    r.label = registry_.name(static_cast<std::size_t>(best));
    r.confidence = p[best];

    if (include_explanation) {
      auto job = explain_queue_.submit([this, &img, best] {
        const auto heat = grad_cam(model_, img, best);
        const auto png = encode_png(overlay(heat, img, overlay_alpha_));
        return base64_encode(std::as_bytes(std::span(png)));
      });
      r.gradcam_overlay = job.get();
    }
  } catch (const Error& e) {
    log::error("inference failed: ", e.what());
    throw Error(ErrorCode::InternalInferenceError, "inference failed");
  } catch (const std::exception& e) {
    log::error("inference failed: ", e.what());
    throw Error(ErrorCode::InternalInferenceError, "inference failed");
  }
  r.model_version = model_version_;
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return r;
}

ordered_json InferenceService::health() const {
  return {{"status", "ready"}, {"model_version", model_version_}, {"classes", registry_.names()}};
}

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, ordered_json{{"error", code}, {"message", message}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedMediaType:
      return 415;
    case ErrorCode::PayloadTooLarge:
      return 413;
    case ErrorCode::InvalidArgument:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

HttpServer::HttpServer(const InferenceService& service, ServiceConfig config)
    : service_(service), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  config_.validate();
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto& srv = *server_;
  // Plain SO_REUSEADDR so a second server on a busy port fails to bind.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  // Multipart framing adds a little on top of the image itself.
  srv.set_payload_max_length(config_.max_payload_bytes + 64U * 1024U);
  srv.new_task_queue = [n = config_.worker_threads] { return new httplib::ThreadPool(static_cast<size_t>(n)); };

  srv.Post("/api/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
    bool explain = true;
    if (req.has_param("explain")) {
      const auto v = req.get_param_value("explain");
      if (v == "true") {
        explain = true;
      } else if (v == "false") {
        explain = false;
      } else {
        send_error(res, 400, "InvalidArgument", "explain must be true or false");
        return;
      }
    }
    if (!req.is_multipart_form_data() || !req.has_file("image")) {
      send_error(res, 400, "InvalidArgument", "expected a multipart form with an 'image' field");
      return;
    }
    const auto file = req.get_file_value("image");
    try {
      const auto r = service_.handle_predict(std::as_bytes(std::span(file.content.data(), file.content.size())), explain);
      send_json(res, 200, r.to_json());
    } catch (const Error& e) {
      const int status = status_for(e.code());
      const std::string message = status == 500 ? "internal inference error" : e.message();
      send_error(res, status, status == 500 ? "InternalInferenceError" : to_string(e.code()), message);
    }
  });
  srv.Get("/api/v1/health",
          [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, service_.health()); });
  srv.Get("/api/v1/classes", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, ordered_json(service_.classes().names()));
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      log::error("request failed: ", e.what());
    } catch (...) {
      log::error("request failed");
    }
    send_error(res, 500, "InternalInferenceError", "internal inference error");
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    switch (res.status) {
      case 413:
        send_error(res, 413, "PayloadTooLarge", "request body is too large");
        break;
      case 404:
        send_error(res, 404, "NotFound", "no such endpoint");
        break;
      case 400:
        send_error(res, 400, "InvalidArgument", "malformed request");
        break;
      default:
        send_error(res, res.status, "HttpError", httplib::status_message(res.status));
    }
    return httplib::Server::HandlerResponse::Handled;
  });
}

int HttpServer::bind() {
  if (port_ >= 0) return port_;
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else {
    port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ < 0) {
    throw Error(ErrorCode::PortInUse, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  return port_;
}

void HttpServer::run() {
  bind();
  log::info("serving ", service_.model_version(), " on http://", config_.host, ":", port_);
  server_->listen_after_bind();
}

void HttpServer::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

namespace {

std::atomic<HttpServer*> g_active_server{nullptr};

extern "C" void handle_stop_signal(int) {
  // httplib's stop() only flips flags and shuts the listening socket.
  if (auto* s = g_active_server.load()) s->stop();
}

}  // namespace

void serve(const ServiceConfig& config) {
  config.validate();
  const auto service = InferenceService::from_checkpoint(config.checkpoint, config.overlay_alpha, config.max_payload_bytes);
  HttpServer server(*service, config);
  server.bind();
  g_active_server = &server;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  server.run();
  g_active_server = nullptr;
}

}  // namespace tealeaf
