// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "support.hpp"
#include "tealeaf/adversarial.hpp"
#include "tealeaf/config.hpp"
#include "tealeaf/explain.hpp"
#include "tealeaf/log.hpp"
#include "tealeaf/metrics.hpp"
#include "tealeaf/service.hpp"
#include "tealeaf/trainer.hpp"

#ifndef TEALEAF_SOURCE_DIR
#error "TEALEAF_SOURCE_DIR must point at the repository root"
#endif

namespace tealeaf::acceptance {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

Outcome pass(std::string detail = {}) { return {Status::pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Status::fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Status::skip, std::move(detail)}; }

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

// Collects the first few mismatches of a check.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (notes_.size() < 3) notes_.push_back(what);
  }
  bool ok() const { return failures_ == 0; }
  Outcome outcome(const std::string& summary) const {
    if (ok()) return pass(summary);
    std::ostringstream os;
    os << failures_ << " mismatches";
    for (const auto& n : notes_) os << "; " << n;
    return fail(os.str());
  }

 private:
  int failures_ = 0;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ------------------------------------------------------------ metrics

Outcome metric_exactness() {
  std::mt19937_64 rng(2024);
  const ClassRegistry reg(testing::tea_classes());
  Checker check;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 300)(rng);
    std::uniform_int_distribution<std::int64_t> label(0, 6);
    std::vector<std::int64_t> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = label(rng);
      p[i] = trial % 4 == 0 ? t[i] : label(rng);
    }
    const auto cm = confusion_matrix(t, p, reg);
    const auto m = class_metrics(cm);

    // Brute force: count every cell and every marginal directly.
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) agree += t[i] == p[i];
    check.expect(m.accuracy == static_cast<double>(agree) / static_cast<double>(n), "accuracy");
    for (std::int64_t a = 0; a < 7; ++a) {
      std::int64_t tp = 0, truth = 0, predicted = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += t[i] == a && p[i] == a;
        truth += t[i] == a;
        predicted += p[i] == a;
      }
      for (std::int64_t b = 0; b < 7; ++b) {
        std::int64_t cell = 0;
        for (std::size_t i = 0; i < n; ++i) cell += t[i] == a && p[i] == b;
        check.expect(cm.at(a, b) == cell, "cell");
      }
      const double prec = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
      const double rec = truth ? static_cast<double>(tp) / static_cast<double>(truth) : 0.0;
      const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
      const auto& pc = m.per_class[static_cast<std::size_t>(a)];
      check.expect(pc.precision == prec && pc.recall == rec && pc.f1 == f1, "per-class metrics");
    }
  }
  return check.outcome("1000 label sets, K=7, exact");
}

// ------------------------------------------------------------ splits

Outcome split_correctness() {
  std::mt19937_64 rng(77);
  Checker check;
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    std::vector<std::size_t> sizes(k);
    for (auto& s : sizes) s = std::uniform_int_distribution<std::size_t>(3, 120)(rng);
    const auto index = testing::synthetic_index(sizes);
    const auto seed = rng();
    const auto split = stratified_split(index, {}, seed);

    std::set<std::string> seen;
    bool disjoint = true;
    for (const auto* part : {&split.train, &split.val, &split.test}) {
      for (const auto& item : *part) disjoint &= seen.insert(item.path.string()).second;
    }
    check.expect(disjoint, "overlapping parts");
    check.expect(seen.size() == index.items.size(), "union differs from index");
    const auto tr = class_counts(split.train, k);
    const auto va = class_counts(split.val, k);
    const auto te = class_counts(split.test, k);
    for (std::size_t c = 0; c < k; ++c) {
      // floor(0.7 n) and floor(0.2 n) in exact integer arithmetic.
      check.expect(tr[c] == sizes[c] * 7 / 10, "train size");
      check.expect(va[c] == sizes[c] * 2 / 10, "val size");
      check.expect(te[c] == sizes[c] - tr[c] - va[c], "test size");
    }
    check.expect(stratified_split(index, {}, seed) == split, "not deterministic");
  }
  return check.outcome("200 random indexes");
}

Outcome oversampling() {
  std::mt19937_64 rng(31);
  Checker check;
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
    SplitSet split;
    split.registry = ClassRegistry(names);
    std::vector<std::size_t> counts(k);
    for (std::size_t c = 0; c < k; ++c) {
      counts[c] = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
      for (std::size_t i = 0; i < counts[c]; ++i) {
        split.train.push_back({"t/" + names[c] + "/" + std::to_string(i), static_cast<int>(c), false});
      }
      split.val.push_back({"v/" + names[c], static_cast<int>(c), false});
      split.test.push_back({"s/" + names[c], static_cast<int>(c), false});
    }
    const auto out = oversample_training(split, rng());
    const auto target = *std::max_element(counts.begin(), counts.end());
    for (auto c : class_counts(out.train, k)) check.expect(c == target, "class count != max");
    check.expect(out.val == split.val && out.test == split.test, "val/test changed");
    std::size_t originals = 0;
    for (const auto& item : out.train) originals += !item.duplicated;
    check.expect(originals == split.train.size(), "originals dropped");
  }
  return check.outcome("200 class-count vectors");
}

// ------------------------------------------------------------ FGSM

// Features are the channel-pixel mean m; logits (w m + b, 0). The only free
// parameters are w and b.
class MeanBackbone : public Backbone {
 public:
  torch::Tensor forward(torch::Tensor x) override { return x.mean(1, true); }
  std::int64_t out_channels() const override { return 1; }
  std::string feature_layer() const override { return "mean"; }
};

Outcome fgsm_contract() {
  Checker check;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    torch::manual_seed(trial);
    const int size = std::uniform_int_distribution<int>(4, 12)(rng);
    const auto k = std::uniform_int_distribution<std::int64_t>(2, 5)(rng);
    const auto model = testing::make_model(std::make_shared<testing::TinyConvBackbone>(4), k, size, size);
    const auto img = testing::random_image(size, size, rng);
    const double eps = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
    const auto label = std::uniform_int_distribution<std::int64_t>(0, k - 1)(rng);
    const auto out = fgsm_perturb(model, img, label, eps);
    const double dist = (out.tensor() - img.tensor()).abs().max().item<double>();
    check.expect(dist <= eps + 1e-6, "budget exceeded: " + fmt(dist) + " > " + fmt(eps));
    check.expect(out.tensor().min().item<float>() >= 0.0F && out.tensor().max().item<float>() <= 1.0F, "range");
    check.expect(fgsm_perturb(model, img, label, 0.0).equals(img), "epsilon 0 not identity");
  }

  // Logistic oracle: dL/dx = (p0 - y0) w / (3 H W) for every input element.
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double w = std::uniform_real_distribution<double>(-4.0, 4.0)(rng);
    const double b = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    auto model = testing::make_model(std::make_shared<MeanBackbone>(), 2, 5, 5);
    {
      torch::NoGradGuard g;
      model.module().head()->weight.copy_(torch::tensor({{w}, {0.0}}));
      model.module().head()->bias.copy_(torch::tensor({b, 0.0}));
    }
    const auto img = testing::random_image(5, 5, rng);
    const std::int64_t y = trial % 2;
    const double m = img.tensor().to(torch::kDouble).mean().item<double>();
    const double z = w * m + b;
    const double p0 = 1.0 / (1.0 + std::exp(-z));
    const double g = (p0 - (y == 0 ? 1.0 : 0.0)) * w / 75.0;
    const auto grad = input_gradient(model, img.batch(), torch::tensor({y}));
    worst = std::max(worst, (grad.to(torch::kDouble) - g).abs().max().item<double>());

    const double eps = 0.05;
    const double s = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
    const auto expected = (img.tensor().to(torch::kDouble) + eps * s).clamp(0.0, 1.0);
    const auto got = fgsm_perturb(model, img, y, eps).tensor().to(torch::kDouble);
    check.expect((got - expected).abs().max().item<double>() <= 1e-6, "logistic FGSM output");
  }
  check.expect(worst <= 1e-6, "logistic gradient error " + fmt(worst));
  return check.outcome("100 toy models; logistic gradient max error " + fmt(worst, 3));
}

// ------------------------------------------------------------ Grad-CAM

Outcome grad_cam_oracle() {
  Checker check;
  ActivationBundle b;
  b.activations = torch::tensor({1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 1.0, 0.0}).view({2, 2, 2});
  b.gradients = torch::tensor({1.0, 1.0, 1.0, 1.0, -4.0, 0.0, 0.0, 0.0}).view({2, 2, 2});
  // weights (1, -1): relu(A0 - A1) = [[1, 1], [2, 4]] normalized by 4.
  const auto hand = torch::tensor({0.25, 0.25, 0.5, 1.0}, torch::kDouble).view({2, 2});
  const auto h = grad_cam_from_bundle(b, 2, 2);
  check.expect((h.values.to(torch::kDouble) - hand).abs().max().item<double>() <= 1e-5, "hand case");

  b.gradients = torch::zeros_like(b.gradients);
  check.expect(grad_cam_from_bundle(b, 4, 4).values.abs().max().item<double>() == 0.0, "zero gradient");

  // Scaling the target class weights by lambda > 0 scales every gradient.
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    torch::manual_seed(trial);
    const auto model = testing::make_model(std::make_shared<testing::TinyConvBackbone>(6), 3, 12, 12);
    const auto img = testing::random_image(12, 12, rng);
    const std::int64_t target = trial % 3;
    const auto before = grad_cam(model, img, target);
    const double lambda = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    {
      torch::NoGradGuard g;
      model.module().head()->weight[target].mul_(lambda);
    }
    const auto after = grad_cam(model, img, target);
    worst = std::max(worst, (before.values - after.values).abs().max().item<double>());
    check.expect(before.argmax() == after.argmax(), "argmax moved under scaling");
  }
  check.expect(worst <= 1e-6, "scaled maps differ by " + fmt(worst));
  return check.outcome("hand case, zero gradient, 30 scaled models (max diff " + fmt(worst, 3) + ")");
}

// ------------------------------------------------------------ occlusion

torch::Tensor exhaustive_occlusion(const ClassifierModel& model, const ImageTensor& img, const OcclusionConfig& cfg,
                                   std::int64_t target) {
  const int h = img.height();
  const int w = img.width();
  auto positions = [&](int extent) {
    std::vector<int> out;
    int pos = 0;
    for (; pos + cfg.patch_size <= extent; pos += cfg.stride) out.push_back(pos);
    if (out.back() + cfg.patch_size < extent) out.push_back(pos);
    return out;
  };
  const double p0 = model.predict_proba(img.batch())[0][target].item<double>();
  std::vector<double> sum(static_cast<std::size_t>(h * w), 0.0), cnt(sum.size(), 0.0);
  for (int y : positions(h)) {
    for (int x : positions(w)) {
      auto t = img.tensor().clone();
      auto acc = t.accessor<float, 3>();
      const int ye = std::min(h, y + cfg.patch_size);
      const int xe = std::min(w, x + cfg.patch_size);
      for (int c = 0; c < 3; ++c)
        for (int r = y; r < ye; ++r)
          for (int q = x; q < xe; ++q) acc[c][r][q] = cfg.baseline_value;
      const double drop = std::max(p0 - model.predict_proba(t.unsqueeze(0))[0][target].item<double>(), 0.0);
      for (int r = y; r < ye; ++r) {
        for (int q = x; q < xe; ++q) {
          const auto i = static_cast<std::size_t>(r * w + q);
          if (cfg.overlap == OverlapMode::average) {
            sum[i] += drop;
            cnt[i] += 1.0;
          } else {
            sum[i] = std::max(sum[i], drop);
          }
        }
      }
    }
  }
  auto out = torch::empty({h, w}, torch::kDouble);
  auto acc = out.accessor<double, 2>();
  double peak = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int q = 0; q < w; ++q) {
      const auto i = static_cast<std::size_t>(r * w + q);
      acc[r][q] = cfg.overlap == OverlapMode::average ? sum[i] / cnt[i] : sum[i];
      peak = std::max(peak, acc[r][q]);
    }
  }
  return peak > 0 ? out / peak : out;
}

Outcome occlusion_oracle() {
  Checker check;
  std::mt19937_64 rng(13);
  auto compare = [&](const ClassifierModel& model, const ImageTensor& img, const OcclusionConfig& cfg,
                     std::int64_t target, const std::string& label) {
    const auto got = occlusion_sensitivity(model, img, cfg, target).values.to(torch::kDouble);
    const auto want = exhaustive_occlusion(model, img, cfg, target);
    check.expect(torch::equal(got, want), label + " differs by " + fmt((got - want).abs().max().item<double>()));
  };
  torch::manual_seed(0);
  const auto base = testing::make_model(std::make_shared<testing::TinyConvBackbone>(4), 2, 8, 8);
  compare(base, testing::random_image(8, 8, rng), {4, 4, 0.5F, OverlapMode::average}, 0, "8x8 patch 4 stride 4");
  for (int trial = 0; trial < 20; ++trial) {
    torch::manual_seed(100 + trial);
    const int h = std::uniform_int_distribution<int>(6, 20)(rng);
    const int w = std::uniform_int_distribution<int>(6, 20)(rng);
    const auto model = testing::make_model(std::make_shared<testing::TinyConvBackbone>(4), 3, h, w);
    OcclusionConfig cfg;
    cfg.patch_size = std::uniform_int_distribution<int>(1, std::min(h, w))(rng);
    cfg.stride = std::uniform_int_distribution<int>(1, cfg.patch_size)(rng);
    cfg.baseline_value = std::uniform_real_distribution<float>(0.0F, 1.0F)(rng);
    cfg.overlap = trial % 3 == 0 ? OverlapMode::max : OverlapMode::average;
    compare(model, testing::random_image(h, w, rng), cfg, trial % 3, "config " + std::to_string(trial));
  }
  return check.outcome("8x8/4/4 case and 20 random configs, exact");
}

// ------------------------------------------------------------ faithfulness

struct Watermarked {
  fs::path path;
  int cls;
  testing::Box box;
};

Outcome explainer_faithfulness() {
  constexpr int kSize = 32;
  constexpr int kBox = 8;
  TempDir dir;
  std::mt19937_64 rng(21);
  auto make = [&](const std::string& part, int count) {
    std::vector<Watermarked> out;
    for (int i = 0; i < count; ++i) {
      const int cls = i % 2;
      testing::Box box;
      const auto img = testing::watermark_image(kSize, kBox, cls, rng, box);
      const auto path = dir / (part + "_" + std::to_string(i) + ".png");
      write_png(img, path);
      out.push_back({path, cls, box});
    }
    return out;
  };
  const auto train_set = make("train", 200);
  const auto val_set = make("val", 50);
  const auto test_set = make("test", 50);

  SplitSet splits;
  splits.registry = ClassRegistry({"red", "blue"});
  for (const auto& w : train_set) splits.train.push_back({w.path, w.cls, false});
  for (const auto& w : val_set) splits.val.push_back({w.path, w.cls, false});
  for (const auto& w : test_set) splits.test.push_back({w.path, w.cls, false});

  torch::manual_seed(0);
  auto model = testing::make_model(std::make_shared<testing::TinyConvBackbone>(16), 2, kSize, kSize);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 15;
  cfg.patience = 15;
  TrainOptions opts;
  opts.augment = {false, 0.0, 0.0, 0};
  opts.cache_images = true;
  train(model, splits, cfg, opts);
  const double acc = measure_split(model, splits.test).accuracy;

  OcclusionConfig occ{kBox, 2, 0.5F, OverlapMode::average};
  int cam_hits = 0;
  int occ_hits = 0;
  for (const auto& w : test_set) {
    const auto img = load_and_preprocess(w.path, model.preprocess());
    const auto [cy, cx] = grad_cam(model, img, w.cls).argmax();
    cam_hits += w.box.contains(cy, cx);
    const auto [oy, ox] = occlusion_sensitivity(model, img, occ, w.cls).argmax();
    occ_hits += w.box.contains(oy, ox);
  }
  const double cam_rate = cam_hits / 50.0;
  const double occ_rate = occ_hits / 50.0;
  const std::string detail = "test acc " + fmt(acc) + ", Grad-CAM in box " + fmt(cam_rate) + ", occlusion in box " +
                             fmt(occ_rate);
  return cam_rate >= 0.9 && occ_rate >= 0.9 ? pass(detail) : fail(detail);
}

// ------------------------------------------------------------ training

Outcome training_sanity() {
  Checker check;
  // Patience semantics: strict improvement resets, patience k stops after k
  // non-improving epochs.
  EarlyStopState s{std::numeric_limits<double>::infinity(), 0, 5, 0.0};
  const std::vector<double> losses{1.0, 0.9, 0.9, 0.95, 0.91, 0.92, 0.93};
  std::vector<bool> improved, stopped;
  for (double v : losses) {
    const auto step = early_stopping_update(s, v);
    improved.push_back(step.improved);
    stopped.push_back(step.stop);
    s = step.state;
  }
  check.expect(improved == std::vector<bool>{true, true, false, false, false, false, false}, "improvement flags");
  check.expect(stopped == std::vector<bool>{false, false, false, false, false, false, true}, "stop flags");
  EarlyStopState ten{0.5, 9, 10, 0.0};
  check.expect(early_stopping_update(ten, 0.5).stop, "patience 10 stop");
  check.expect(!early_stopping_update(ten, 0.49).stop, "patience 10 reset");
  check.expect(TrainConfig::preset(ArchitectureId::mobilenet_v2).patience == 5, "mobilenet patience");
  check.expect(TrainConfig::preset(ArchitectureId::densenet201).patience == 10, "densenet patience");
  check.expect(TrainConfig::preset(ArchitectureId::inception_v3).patience == 10, "inception patience");
  if (!check.ok()) return check.outcome("");

  // Overfit 5 images per class with a randomly initialized MobileNetV2.
  TempDir dir;
  const auto classes = testing::tea_classes();
  testing::write_color_dataset(dir.path(), classes, std::vector<int>(classes.size(), 5), 64, 3);
  const auto index = scan_dataset(dir.path());
  SplitSet splits;
  splits.registry = index.registry;
  splits.train = index.items;
  splits.val = index.items;

  BuildOptions build;
  build.pretrained = false;
  build.preprocess.height = 64;
  build.preprocess.width = 64;
  torch::manual_seed(0);
  auto model = build_model(ArchitectureId::mobilenet_v2, static_cast<std::int64_t>(classes.size()), build);
  TrainConfig cfg;
  cfg.batch_size = 7;
  cfg.learning_rate = 3e-4;
  cfg.max_epochs = 30;
  cfg.patience = 30;
  TrainOptions opts;
  opts.augment = {false, 0.0, 0.0, 0};
  opts.cache_images = true;
  int reached = 0;
  double best_acc = 0.0;
  opts.hooks.on_epoch = [&](const EpochRecord& r) {
    best_acc = std::max(best_acc, r.train_accuracy);
    if (reached == 0 && r.train_accuracy >= 0.95) reached = r.epoch;
  };
  train(model, splits, cfg, opts);
  const double eval_acc = measure_split(model, splits.train).accuracy;
  const std::string detail = "early-stop cases exact; overfit train accuracy " + fmt(best_acc) +
                             (reached ? " (>= 0.95 at epoch " + std::to_string(reached) + ")" : "") +
                             ", eval-mode " + fmt(eval_acc);
  return reached > 0 ? pass(detail) : fail(detail);
}

// ------------------------------------------------------------ service

Outcome service_contract() {
  TempDir dir;
  torch::manual_seed(0);
  BuildOptions build;
  build.pretrained = false;
  build.preprocess.height = 64;
  build.preprocess.width = 64;
  const auto stub = build_model(ArchitectureId::mobilenet_v2, 7, build);
  save_checkpoint(stub, ClassRegistry(testing::tea_classes()), dir / "stub.pt");

  const auto service = InferenceService::from_checkpoint(dir / "stub.pt");
  ServiceConfig sc;
  sc.port = 0;
  HttpServer server(*service, sc);
  server.start();

  std::ifstream in(fs::path(TEALEAF_SOURCE_DIR) / "tests/fixtures/golden_leaf.png", std::ios::binary);
  const std::string image((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (image.empty()) return fail("fixture image missing");

  Checker check;
  httplib::Client client("127.0.0.1", server.port());
  client.set_read_timeout(30, 0);
  std::vector<json> bodies;
  for (int i = 0; i < 3; ++i) {
    httplib::MultipartFormDataItems items{{"image", image, "golden_leaf.png", "image/png"}};
    const auto res = client.Post("/api/v1/predict?explain=true", items);
    if (!res || res->status != 200) {
      server.stop();
      return fail("request failed" + (res ? ": HTTP " + std::to_string(res->status) + " " + res->body : ""));
    }
    bodies.push_back(json::parse(res->body));
  }
  server.stop();

  const auto& j = bodies.front();
  for (const char* key : {"label", "confidence", "probabilities", "gradcam_overlay", "model_version", "latency_ms"}) {
    check.expect(j.contains(key), std::string("missing ") + key);
  }
  if (!check.ok()) return check.outcome("");
  check.expect(j.at("label").is_string() && j.at("confidence").is_number() && j.at("probabilities").is_object() &&
                   j.at("gradcam_overlay").is_string() && j.at("model_version").is_string(),
               "field types");
  double sum = 0.0;
  double peak = 0.0;
  std::string argmax;
  std::vector<std::string> keys;
  for (const auto& [name, p] : j.at("probabilities").items()) {
    keys.push_back(name);
    sum += p.get<double>();
    if (p.get<double>() > peak) {
      peak = p.get<double>();
      argmax = name;
    }
  }
  check.expect(keys == testing::tea_classes(), "probability keys");
  check.expect(std::abs(sum - 1.0) <= 1e-4, "probabilities sum to " + fmt(sum, 8));
  check.expect(j.at("confidence").get<double>() == peak, "confidence != max probability");
  check.expect(j.at("label") == argmax, "label != argmax");
  for (auto b : bodies) {
    b.erase("latency_ms");
    auto first = bodies.front();
    first.erase("latency_ms");
    check.expect(b == first, "responses differ across identical calls");
  }
  return check.outcome("schema, sum " + fmt(sum, 8) + ", 3 identical calls");
}

// ------------------------------------------------------------ full scale

Outcome full_scale() {
  const char* root = std::getenv("TEALEAF_DATASET_ROOT");
  if (!root || !*root) return skip("set TEALEAF_DATASET_ROOT (and TEALEAF_WEIGHTS_DIR) to run");
  const char* weights = std::getenv("TEALEAF_WEIGHTS_DIR");
  const auto index = scan_dataset(root);
  const auto splits = oversample_training(stratified_split(index, {}, 0), 0);
  BuildOptions build;
  build.pretrained = weights != nullptr;
  if (weights) build.weights_dir = fs::path(weights);
  const auto k = static_cast<std::int64_t>(splits.registry.count());
  auto cfg = TrainConfig::preset(ArchitectureId::densenet201);
  TrainOptions opts;

  auto model = build_model(ArchitectureId::densenet201, k, build);
  train(model, splits, cfg, opts);
  const auto report = evaluate(model, splits.test, splits.registry);
  const double test_acc = report.metrics.accuracy;

  AdversarialConfig adv;
  SweepOptions sweep_opts;
  sweep_opts.build = build;
  const auto sweep = epsilon_sweep(ArchitectureId::densenet201, splits, cfg, adv, sweep_opts);
  double worst = 1.0;
  for (const auto& r : sweep.rows) worst = std::min(worst, r.val_accuracy);
  const std::string detail = "DenseNet201 test acc " + fmt(test_acc) + ", worst sweep val acc " + fmt(worst);
  return test_acc >= 0.95 && worst >= 0.97 ? pass(detail) : fail(detail);
}

std::vector<Criterion> criteria() {
  return {
      {"metric-exactness", 5, metric_exactness},
      {"split-correctness", 10, split_correctness},
      {"oversampling", 5, oversampling},
      {"fgsm-contract", 30, fgsm_contract},
      {"gradcam-oracle", 30, grad_cam_oracle},
      {"occlusion-oracle", 60, occlusion_oracle},
      {"explainer-faithfulness", 300, explainer_faithfulness},
      {"training-sanity", 600, training_sanity},
      {"service-contract", 30, service_contract},
      {"full-scale", 7 * 24 * 3600, full_scale},
  };
}

}  // namespace
}  // namespace tealeaf::acceptance

int main(int argc, char** argv) {
  using namespace tealeaf::acceptance;
  CLI::App app{"tealeaf acceptance suite"};
  std::vector<std::string> only;
  bool list = false;
  bool verbose = false;
  app.add_option("--only", only, "run just these criteria");
  app.add_flag("--list", list, "print criterion names");
  app.add_flag("--verbose", verbose, "log training progress");
  CLI11_PARSE(app, argc, argv);

  tealeaf::log::use_stderr();
  tealeaf::log::set_level(verbose ? tealeaf::log::Level::info : tealeaf::log::Level::warn);
  torch::set_num_threads(1);

  int failures = 0;
  for (const auto& c : criteria()) {
    if (list) {
      std::cout << c.name << '\n';
      continue;
    }
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::pass && secs > c.limit_seconds) {
      o = fail("over the " + fmt(c.limit_seconds) + " s limit; " + o.detail);
    }
    const char* tag = o.status == Status::pass ? "PASS" : (o.status == Status::fail ? "FAIL" : "SKIP");
    failures += o.status == Status::fail;
    std::cout << tag << "  " << std::left << std::setw(24) << c.name << std::right << std::fixed
              << std::setprecision(2) << std::setw(9) << secs << " s  " << o.detail << std::endl;
    std::cout.unsetf(std::ios::floatfield);
  }
  return failures == 0 ? 0 : 1;
}
