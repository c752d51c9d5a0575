#include "tealeaf/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>


#include "CLI11.hpp"
#include "tealeaf/adversarial.hpp"
#include "tealeaf/config.hpp"
#include "tealeaf/dataset.hpp"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"
#include "tealeaf/explain.hpp"
#include "tealeaf/metrics.hpp"
#include "tealeaf/model.hpp"
#include "tealeaf/plot.hpp"
#include "tealeaf/service.hpp"
#include "tealeaf/trainer.hpp"

namespace tealeaf {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSubcommands = {"ingest",   "train",   "adv-train", "sweep",
                                               "evaluate", "explain", "serve",     "plot"};

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool overwrite = false;
  std::string log_level = "info";

  std::string checkpoint;
  std::string image;
  std::string method;
  std::optional<std::int64_t> target;
  std::string host;
  std::optional<int> port;
};

RunConfig resolve_config(const CommonArgs& a) {
  std::vector<std::pair<std::string, std::string>> entries;
  if (!a.config.empty()) entries = read_config_entries(a.config);
  for (const auto& s : a.sets) entries.push_back(parse_override(s));
  if (a.seed) entries.emplace_back("run.seed", std::to_string(*a.seed));
  if (!a.output_dir.empty()) entries.emplace_back("run.output_dir", a.output_dir);
  if (!a.method.empty()) entries.emplace_back("explain.method", a.method);
  if (!a.host.empty()) entries.emplace_back("serve.host", a.host);
  if (a.port) entries.emplace_back("serve.port", std::to_string(*a.port));
  return build_run_config(entries);
}

// Refuses to clobber existing outputs unless --overwrite was given.
void claim_outputs(const std::vector<fs::path>& outputs, bool overwrite) {
  for (const auto& p : outputs) {
    if (!overwrite && fs::exists(p)) {
      throw Error(ErrorCode::OutputExists, p.string() + " exists (pass --overwrite to replace it)");
    }
  }
  for (const auto& p : outputs) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }
}

void require_dataset(const RunConfig& cfg) {
  if (cfg.dataset_root.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "run.dataset_root is required");
  }
}

SplitSet ingest_splits(const RunConfig& cfg) {
  require_dataset(cfg);
  const auto index = scan_dataset(cfg.dataset_root);
  auto splits = stratified_split(index, cfg.split, cfg.seed);
  if (cfg.oversample) splits = oversample_training(splits, cfg.seed);
  return splits;
}

fs::path manifest_path(const RunConfig& cfg) { return cfg.output_dir / "manifest.jsonl"; }

// The run's manifest when ingest already ran; otherwise a fresh split that
// is also recorded as the manifest.
SplitSet load_or_ingest(const RunConfig& cfg, bool overwrite) {
  if (fs::exists(manifest_path(cfg))) {
    return read_manifest(manifest_path(cfg));
  }
  auto splits = ingest_splits(cfg);
  claim_outputs({manifest_path(cfg)}, overwrite);
  write_manifest(splits, manifest_path(cfg));
  return splits;
}

BuildOptions build_options(const RunConfig& cfg) {
  BuildOptions b;
  b.pretrained = cfg.pretrained;
  b.weights_dir = cfg.weights_dir;
  b.preprocess = cfg.preprocess;
  return b;
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions t;
  t.augment = cfg.augment;
  t.cache_images = cfg.cache_images;
  return t;
}

fs::path checkpoint_arg(const CommonArgs& a, const RunConfig& cfg, const char* fallback) {
  if (!a.checkpoint.empty()) return a.checkpoint;
  if (!cfg.serve.checkpoint.empty() && std::string(fallback) == "serve") return cfg.serve.checkpoint;
  return cfg.output_dir / "checkpoint.pt";
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

void run_ingest(const CommonArgs& a, const RunConfig& cfg, std::ostream& out) {
  claim_outputs({manifest_path(cfg)}, a.overwrite);
  const auto splits = ingest_splits(cfg);
  write_manifest(splits, manifest_path(cfg));
  const auto k = splits.registry.count();
  out << "classes " << k << ", train " << splits.train.size() << ", val " << splits.val.size() << ", test "
      << splits.test.size() << '\n';
  out << "wrote " << manifest_path(cfg).string() << '\n';
}

void run_train(const CommonArgs& a, const RunConfig& cfg, bool adversarial, std::ostream& out) {
  const auto ckpt = cfg.output_dir / (adversarial ? "adv_checkpoint.pt" : "checkpoint.pt");
  const auto hist = cfg.output_dir / (adversarial ? "adv_history.jsonl" : "history.jsonl");
  claim_outputs({ckpt, hist}, a.overwrite);
  const auto splits = load_or_ingest(cfg, a.overwrite);
  auto model = build_model(cfg.architecture, static_cast<std::int64_t>(splits.registry.count()), build_options(cfg));
  const auto history = adversarial ? adversarial_train(model, splits, cfg.train, cfg.adversarial, train_options(cfg))
                                   : train(model, splits, cfg.train, train_options(cfg));
  save_checkpoint(model, splits.registry, ckpt);
  export_history(history, hist);
  const auto& best = history.best();
  out << "best epoch " << best.epoch << ": val_loss " << best.val_loss << ", val_acc " << best.val_accuracy
      << (history.stopped_early ? " (stopped early)" : "") << '\n';
  out << "wrote " << ckpt.string() << " and " << hist.string() << '\n';
}

void run_sweep(const CommonArgs& a, const RunConfig& cfg, std::ostream& out) {
  const auto jsonl = cfg.output_dir / "sweep.jsonl";
  const auto txt = cfg.output_dir / "sweep.txt";
  claim_outputs({jsonl, txt}, a.overwrite);
  const auto splits = load_or_ingest(cfg, a.overwrite);
  SweepOptions opts;
  opts.build = build_options(cfg);
  opts.train = train_options(cfg);
  opts.on_row = [&out](const SweepRow& r) {
    out << "epsilon " << r.epsilon << ": val_loss " << r.val_loss << ", val_acc " << r.val_accuracy << ", epochs "
        << r.optimal_epochs << std::endl;
  };
  const auto report = epsilon_sweep(cfg.architecture, splits, cfg.train, cfg.adversarial, opts);
  write_sweep_report(report, jsonl);
  const auto table = render_sweep_table(report);
  write_text(table, txt);
  out << table;
}

void run_evaluate(const CommonArgs& a, const RunConfig& cfg, std::ostream& out) {
  const auto json_path = cfg.output_dir / "report.json";
  const auto txt = cfg.output_dir / "report.txt";
  claim_outputs({json_path, txt}, a.overwrite);
  if (!fs::exists(manifest_path(cfg))) {
    throw Error(ErrorCode::InvalidArgument, manifest_path(cfg).string() + " not found (run ingest or train first)");
  }
  const auto splits = read_manifest(manifest_path(cfg));
  const auto loaded = load_checkpoint(checkpoint_arg(a, cfg, "evaluate"), splits.registry);
  const auto& items = splits.items(cfg.eval_split);
  const auto report = evaluate(loaded.model, items, splits.registry, cfg.eval_batch_size);
  write_report_json(report, json_path);
  const auto arch = loaded.model.architecture();
  const auto table = render_report_table(report.matrix, report.metrics, arch ? std::string(to_string(*arch)) : "");
  write_text(table, txt);
  out << table;
}

void run_explain(const CommonArgs& a, const RunConfig& cfg, std::ostream& out) {
  if (a.image.empty()) {
    throw Error(ErrorCode::InvalidArgument, "explain needs --image <path>");
  }
  const fs::path image(a.image);
  const auto stem = image.stem().string();
  const bool want_cam = cfg.explain_method != ExplainMethod::occlusion;
  const bool want_occ = cfg.explain_method != ExplainMethod::grad_cam;
  std::vector<fs::path> outputs;
  if (want_cam) {
    outputs.push_back(cfg.output_dir / (stem + "_gradcam.png"));
    outputs.push_back(cfg.output_dir / (stem + "_gradcam_overlay.png"));
  }
  if (want_occ) {
    outputs.push_back(cfg.output_dir / (stem + "_occlusion.png"));
    outputs.push_back(cfg.output_dir / (stem + "_occlusion_overlay.png"));
  }
  claim_outputs(outputs, a.overwrite);

  const auto loaded = load_checkpoint(checkpoint_arg(a, cfg, "explain"));
  const auto img = load_and_preprocess(image, loaded.model.preprocess());
  const auto probs = loaded.model.predict_proba(img).to(torch::kDouble);
  const auto predicted = argmax_lowest(probs);
  out << "predicted " << loaded.registry.name(static_cast<std::size_t>(predicted)) << " ("
      << probs[predicted].item<double>() << ")\n";

  std::size_t next = 0;
  auto emit = [&](const Heatmap& heat) {
    write_heatmap_png(heat, outputs[next++]);
    write_png(overlay(heat, img, cfg.overlay_alpha), outputs[next++]);
  };
  if (want_cam) emit(grad_cam(loaded.model, img, a.target));
  if (want_occ) emit(occlusion_sensitivity(loaded.model, img, cfg.occlusion, a.target));
  for (const auto& p : outputs) out << "wrote " << p.string() << '\n';
}

void run_serve(const CommonArgs& a, const RunConfig& cfg) {
  auto sc = cfg.serve;
  sc.checkpoint = checkpoint_arg(a, cfg, "serve");
  serve(sc);
}

void run_plot(const CommonArgs& a, const RunConfig& cfg, std::ostream& out) {
  struct Job {
    fs::path input;
    fs::path output;
  };
  const std::vector<Job> jobs = {
      {cfg.output_dir / "history.jsonl", cfg.output_dir / "history.png"},
      {cfg.output_dir / "adv_history.jsonl", cfg.output_dir / "adv_history.png"},
      {cfg.output_dir / "sweep.jsonl", cfg.output_dir / "sweep.png"},
      {cfg.output_dir / "report.json", cfg.output_dir / "confusion.png"},
  };
  std::vector<Job> present;
  std::copy_if(jobs.begin(), jobs.end(), std::back_inserter(present), [](const Job& j) { return fs::exists(j.input); });
  if (present.empty()) {
    throw Error(ErrorCode::InvalidArgument, "nothing to plot in " + cfg.output_dir.string());
  }
  std::vector<fs::path> outputs;
  for (const auto& j : present) outputs.push_back(j.output);
  claim_outputs(outputs, a.overwrite);
  for (const auto& j : present) {
    const auto name = j.input.filename().string();
    if (name == "sweep.jsonl") {
      write_image(render_sweep(read_sweep_report(j.input)), j.output);
    } else if (name == "report.json") {
      write_image(render_confusion(read_report_matrix(j.input)), j.output);
    } else {
      write_image(render_history(load_history(j.input)), j.output);
    }
    out << "wrote " << j.output.string() << '\n';
  }
}

void add_common(CLI::App& sub, CommonArgs& a) {
  sub.add_option("--config", a.config, "INI run configuration")->check(CLI::ExistingFile);
  sub.add_option("--set", a.sets, "override a config key: section.key=value");
  sub.add_option("--seed", a.seed, "run seed");
  sub.add_option("--output-dir", a.output_dir, "artifact directory");
  sub.add_flag("--overwrite", a.overwrite, "replace existing outputs");
  sub.add_option("--log-level", a.log_level, "trace|debug|info|warn|error|off");
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tea leaf disease classification pipeline", "tealeaf"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  CommonArgs a;
  std::string selected;
  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name);
    add_common(*sub, a);
    if (name == "evaluate" || name == "explain" || name == "serve") {
      sub->add_option("--checkpoint", a.checkpoint, "checkpoint file (default <output_dir>/checkpoint.pt)");
    }
    if (name == "explain") {
      sub->add_option("--image", a.image, "input image")->required();
      sub->add_option("--method", a.method, "gradcam|occlusion|both");
      sub->add_option("--target", a.target, "class index to explain (default: predicted)");
    }
    if (name == "serve") {
      sub->add_option("--host", a.host, "bind address");
      sub->add_option("--port", a.port, "port (0 picks a free one)");
    }
    sub->callback([&selected, name] { selected = name; });
  }

  try {
    if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
        std::find(kSubcommands.begin(), kSubcommands.end(), args.front()) == kSubcommands.end()) {
      throw Error(ErrorCode::UnknownSubcommand, "'" + args.front() + "' is not a subcommand");
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    log::set_level(log::parse_level(a.log_level));
    const auto cfg = resolve_config(a);
    if (selected == "ingest") {
      run_ingest(a, cfg, out);
    } else if (selected == "train" || selected == "adv-train") {
      run_train(a, cfg, selected == "adv-train", out);
    } else if (selected == "sweep") {
      run_sweep(a, cfg, out);
    } else if (selected == "evaluate") {
      run_evaluate(a, cfg, out);
    } else if (selected == "explain") {
      run_explain(a, cfg, out);
    } else if (selected == "serve") {
      run_serve(a, cfg);
    } else if (selected == "plot") {
      run_plot(a, cfg, out);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    // Prints help/version to `out`, parse errors to `err`.
    return app.exit(e, out, err) == 0 ? 0 : 1;
  } catch (const Error& e) {
    err << "tealeaf: error: " << e.what() << '\n';
    return is_user_error(e.code()) ? 1 : 2;
  } catch (const fs::filesystem_error& e) {
    err << "tealeaf: error: IoFailure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "tealeaf: error: internal: " << e.what() << '\n';
    return 2;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace tealeaf
