#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "expect_error.hpp"
#include "support.hpp"
#include "tealeaf/service.hpp"

namespace tealeaf {
namespace {

using nlohmann::json;
using testing::code_of;
using testing::TempDir;

std::string png_bytes(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto rgb = testing::random_image(height, width, rng).to_rgb8();
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  std::vector<unsigned char> buf;
  cv::imencode(".png", bgr, buf);
  return {buf.begin(), buf.end()};
}

std::span<const std::byte> as_bytes(const std::string& s) { return std::as_bytes(std::span(s.data(), s.size())); }

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    torch::manual_seed(0);
    BuildOptions opts;
    opts.preprocess.height = 32;
    opts.preprocess.width = 32;
    const auto model = build_model(ArchitectureId::mobilenet_v2, 7, opts);
    save_checkpoint(model, ClassRegistry(testing::tea_classes()), checkpoint());
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path checkpoint() { return *dir_ / "model.pt"; }

  static TempDir* dir_;
};

TempDir* ServiceTest::dir_ = nullptr;

TEST(Base64, RoundTripAndKnownVectors) {
  const std::string hello = "hello";
  EXPECT_EQ(base64_encode(as_bytes(hello)), "aGVsbG8=");
  EXPECT_EQ(base64_encode(as_bytes(std::string("ab"))), "YWI=");
  EXPECT_EQ(base64_encode(as_bytes(std::string("abc"))), "YWJj");
  EXPECT_EQ(base64_encode({}), "");
  std::mt19937_64 rng(1);
  for (int n = 0; n < 40; ++n) {
    std::vector<std::byte> data(static_cast<std::size_t>(n));
    for (auto& b : data) b = static_cast<std::byte>(rng() & 0xFF);
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
}

TEST_F(ServiceTest, PredictReturnsDistributionOverRegistry) {
  const auto service = InferenceService::from_checkpoint(checkpoint());
  const auto img = png_bytes(50, 40, 2);
  const auto r = service->handle_predict(as_bytes(img), false);
  ASSERT_EQ(r.probabilities.size(), 7U);
  double sum = 0.0;
  double best = -1.0;
  std::string best_label;
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(r.probabilities[i].first, testing::tea_classes()[i]);
    sum += r.probabilities[i].second;
    if (r.probabilities[i].second > best) {
      best = r.probabilities[i].second;
      best_label = r.probabilities[i].first;
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_EQ(r.label, best_label);
  EXPECT_DOUBLE_EQ(r.confidence, best);
  EXPECT_FALSE(r.gradcam_overlay.has_value());
  EXPECT_EQ(r.model_version, service->model_version());
  EXPECT_EQ(r.model_version.rfind("mobilenet_v2-", 0), 0U);

  const auto with = service->handle_predict(as_bytes(img), true);
  ASSERT_TRUE(with.gradcam_overlay.has_value());
  EXPECT_EQ(with.label, r.label);
  const auto png = base64_decode(*with.gradcam_overlay);
  const cv::Mat decoded = cv::imdecode(
      cv::Mat(1, static_cast<int>(png.size()), CV_8UC1, const_cast<std::byte*>(png.data())), cv::IMREAD_COLOR);
  EXPECT_EQ(decoded.rows, 32);
  EXPECT_EQ(decoded.cols, 32);

  const auto j = with.to_json();
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"label", "confidence", "probabilities", "gradcam_overlay", "model_version",
                                            "latency_ms"}));
}

TEST_F(ServiceTest, PredictErrors) {
  const auto service = InferenceService::from_checkpoint(checkpoint(), 0.4, 1000);
  const std::string junk = "this is not an image";
  EXPECT_EQ(code_of([&] { service->handle_predict(as_bytes(junk), false); }), ErrorCode::UnsupportedMediaType);
  EXPECT_EQ(code_of([&] { service->handle_predict(as_bytes(png_bytes(64, 64, 3)), false); }),
            ErrorCode::PayloadTooLarge);
  EXPECT_EQ(code_of([&] { service->handle_predict({}, false); }), ErrorCode::UnsupportedMediaType);
}

TEST_F(ServiceTest, VersionIsStableAndContentAddressed) {
  EXPECT_EQ(checkpoint_version(checkpoint(), ArchitectureId::mobilenet_v2),
            checkpoint_version(checkpoint(), ArchitectureId::mobilenet_v2));
  TempDir dir;
  std::filesystem::copy_file(checkpoint(), dir / "copy.pt");
  EXPECT_EQ(checkpoint_version(dir / "copy.pt", ArchitectureId::mobilenet_v2),
            checkpoint_version(checkpoint(), ArchitectureId::mobilenet_v2));
  std::ofstream(dir / "copy.pt", std::ios::app) << "x";
  EXPECT_NE(checkpoint_version(dir / "copy.pt", ArchitectureId::mobilenet_v2),
            checkpoint_version(checkpoint(), ArchitectureId::mobilenet_v2));
}

TEST(ServiceLoad, CorruptCheckpointFailsAtStartup) {
  TempDir dir;
  std::ofstream(dir / "bad.pt") << "garbage";
  EXPECT_EQ(code_of([&] { InferenceService::from_checkpoint(dir / "bad.pt"); }), ErrorCode::CorruptCheckpoint);
  ServiceConfig cfg;
  cfg.port = 70000;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::ConfigInvalid);
  cfg = {};
  cfg.overlay_alpha = 2.0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::ConfigInvalid);
}

class HttpTest : public ServiceTest {
 protected:
  void SetUp() override {
    service_ = InferenceService::from_checkpoint(checkpoint(), 0.4, 100 * 1024);
    ServiceConfig cfg;
    cfg.port = 0;
    cfg.max_payload_bytes = 100 * 1024;
    server_ = std::make_unique<HttpServer>(*service_, cfg);
    server_->start();
  }
  void TearDown() override { server_->stop(); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server_->port());
    c.set_read_timeout(60, 0);
    return c;
  }

  httplib::Result post_image(const std::string& bytes, const std::string& query = "") const {
    httplib::MultipartFormDataItems items{{"image", bytes, "leaf.png", "image/png"}};
    return client().Post("/api/v1/predict" + query, items);
  }

  std::unique_ptr<InferenceService> service_;
  std::unique_ptr<HttpServer> server_;
};

TEST_F(HttpTest, HealthAndClasses) {
  auto c = client();
  const auto health = c.Get("/api/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  const auto h = json::parse(health->body);
  EXPECT_EQ(h.at("status"), "ready");
  EXPECT_EQ(h.at("model_version"), service_->model_version());

  const auto classes = c.Get("/api/v1/classes");
  ASSERT_TRUE(classes);
  EXPECT_EQ(json::parse(classes->body).get<std::vector<std::string>>(), testing::tea_classes());
  EXPECT_EQ(c.Get("/api/v1/nothing")->status, 404);
}

TEST_F(HttpTest, PredictOverHttpMatchesDirectCall) {
  const auto img = png_bytes(40, 40, 4);
  const auto res = post_image(img, "?explain=false");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  const auto j = json::parse(res->body);
  const auto direct = service_->handle_predict(as_bytes(img), false);
  EXPECT_EQ(j.at("label"), direct.label);
  EXPECT_DOUBLE_EQ(j.at("confidence").get<double>(), direct.confidence);
  EXPECT_FALSE(j.contains("gradcam_overlay"));

  const auto explained = post_image(img);
  ASSERT_EQ(explained->status, 200);
  EXPECT_TRUE(json::parse(explained->body).contains("gradcam_overlay"));
}

TEST_F(HttpTest, ErrorStatuses) {
  const auto junk = post_image("not an image at all");
  ASSERT_TRUE(junk);
  EXPECT_EQ(junk->status, 415);
  EXPECT_EQ(json::parse(junk->body).at("error"), "UnsupportedMediaType");

  // Over the service limit but inside the framing allowance.
  const auto big = post_image(std::string(120 * 1024, 'x'));
  ASSERT_TRUE(big);
  EXPECT_EQ(big->status, 413);
  EXPECT_EQ(json::parse(big->body).at("error"), "PayloadTooLarge");

  // Rejected by the transport before reaching the handler.
  const auto huge = post_image(std::string(400 * 1024, 'x'));
  if (huge) {
    EXPECT_EQ(huge->status, 413);
  }

  const auto bad_flag = post_image(png_bytes(8, 8, 5), "?explain=maybe");
  EXPECT_EQ(bad_flag->status, 400);
  EXPECT_EQ(json::parse(bad_flag->body).at("error"), "InvalidArgument");

  httplib::MultipartFormDataItems wrong{{"file", png_bytes(8, 8, 5), "a.png", "image/png"}};
  const auto missing = client().Post("/api/v1/predict", wrong);
  EXPECT_EQ(missing->status, 400);
  const auto not_multipart = client().Post("/api/v1/predict", "abc", "text/plain");
  EXPECT_EQ(not_multipart->status, 400);
}

TEST_F(HttpTest, ConcurrentClientsGetConsistentAnswers) {
  const auto a = png_bytes(30, 30, 6);
  const auto b = png_bytes(30, 30, 7);
  const auto expect_a = service_->handle_predict(as_bytes(a), false);
  const auto expect_b = service_->handle_predict(as_bytes(b), false);
  std::atomic<int> failures{0};
  auto worker = [&](const std::string& img, const PredictionResponse& expected, bool explain) {
    for (int i = 0; i < 8; ++i) {
      const auto res = post_image(img, explain ? "?explain=true" : "?explain=false");
      if (!res || res->status != 200) {
        ++failures;
        continue;
      }
      const auto j = json::parse(res->body);
      if (j.at("label") != expected.label ||
          std::abs(j.at("confidence").get<double>() - expected.confidence) > 1e-6) {
        ++failures;
      }
    }
  };
  std::thread t1(worker, std::cref(a), std::cref(expect_a), true);
  std::thread t2(worker, std::cref(b), std::cref(expect_b), false);
  std::thread t3(worker, std::cref(a), std::cref(expect_a), false);
  t1.join();
  t2.join();
  t3.join();
  EXPECT_EQ(failures.load(), 0);
}

TEST_F(HttpTest, SecondServerOnSamePortFails) {
  ServiceConfig cfg;
  cfg.port = server_->port();
  HttpServer other(*service_, cfg);
  EXPECT_EQ(code_of([&] { other.bind(); }), ErrorCode::PortInUse);
}

TEST_F(HttpTest, SkippingExplanationIsFaster) {
  const auto img = png_bytes(64, 64, 8);
  auto median_ms = [&](bool explain) {
    std::vector<double> times;
    for (int i = 0; i < 20; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = post_image(img, explain ? "?explain=true" : "?explain=false");
      const auto t1 = std::chrono::steady_clock::now();
      EXPECT_EQ(res->status, 200);
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + 10, times.end());
    return times[10];
  };
  median_ms(false);  // warm up
  const double plain = median_ms(false);
  const double explained = median_ms(true);
  EXPECT_LT(plain, explained);
}

}  // namespace
}  // namespace tealeaf
