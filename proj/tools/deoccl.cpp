// deoccl command-line entry point: prepare, train, infer, evaluate.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "deoccl/config.hpp"
#include "deoccl/dataset.hpp"
#include "deoccl/metrics.hpp"
#include "deoccl/training.hpp"

namespace fs = std::filesystem;
using namespace deoccl;

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_file, "Config file (deoccl-config v1)");
  cmd->add_option("--set", opts.overrides, "Override a config key, key=value (repeatable)");
}

// Defaults, then the config file, then --set, then the command's own flags.
RunConfig resolve(const CommonOptions& opts, const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  cfg.data_root = default_data_root();
  if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::usage, "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : flags) cfg.set(k, v);
  cfg.finalize();
  return cfg;
}

void echo_config(const RunConfig& cfg) {
  std::cout << "# resolved configuration\n" << cfg.to_text();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::write_failed, "cannot write " + path.string());
  out << text;
}

template <typename V>
void flag(std::vector<std::pair<std::string, std::string>>& flags, const std::string& key, const std::optional<V>& v) {
  if (!v) return;
  std::ostringstream s;
  s << *v;
  flags.emplace_back(key, s.str());
}

std::vector<fs::path> png_files(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    require(fs::exists(input), ErrorKind::file_missing, "no such input: " + input.string());
    files.push_back(input);
  }
  require(!files.empty(), ErrorKind::empty_input, "no frames in " + input.string());
  return files;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string network_hash(const NetworkConfig& n) {
  std::ostringstream s;
  s << n.image_size << ',' << n.base_filters << ',' << n.bottleneck_dim << ',' << n.encoder_depth << ','
    << n.attention_site_size << ',' << n.batch_norm << ',' << n.mask_input_channel;
  const std::string text = s.str();
  return hex(fnv1a(text.data(), text.size()));
}

// --- prepare ----------------------------------------------------------------

struct PrepareOptions {
  CommonOptions common;
  std::string frames, subject, session, appearance;
  std::optional<std::string> data_root, mask_shape, provider;
  std::optional<int> size;
  std::optional<double> h_margin, v_margin;
  std::vector<int> face_box;
  bool no_upscale = false;
};

int cmd_prepare(const PrepareOptions& o) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "data_root", o.data_root);
  flag(flags, "image_size", o.size);
  flag(flags, "mask_horizontal_margin", o.h_margin);
  flag(flags, "mask_vertical_margin", o.v_margin);
  flag(flags, "mask_shape", o.mask_shape);
  flag(flags, "landmark_provider", o.provider);
  const RunConfig cfg = resolve(o.common, flags);
  echo_config(cfg);

  IngestOptions ingest;
  ingest.allow_upscale = !o.no_upscale;
  if (!o.face_box.empty()) {
    require(o.face_box.size() == 4, ErrorKind::usage, "--face-box expects x y width height");
    ingest.face_box = Rect{o.face_box[0], o.face_box[1], o.face_box[2], o.face_box[3]};
  }
  SessionManifest manifest = ingest_session(o.frames, cfg.data_root, o.subject, o.session, o.appearance,
                                            cfg.network.image_size, ingest);
  const std::size_t ingested = manifest.frame_paths.size();
  LandmarkDetector detector(LandmarkProviderRegistry::instance().create(cfg.landmark_provider));
  const MaskingReport report = synthesize_session_masks(manifest, detector, cfg.mask);
  std::cout << "frames: " << ingested << "\n"
            << "masked: " << report.masked << "\n"
            << "skipped (no face or degenerate eye region): " << report.skipped << "\n"
            << "manifest: " << (manifest.directory / "manifest.txt").string() << "\n";
  require(report.masked > 0, ErrorKind::empty_input, "no usable frames after mask synthesis");
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainOptions {
  CommonOptions common;
  std::string step = "all";
  std::string resume;
  std::optional<double> epoch_scale;
  std::optional<std::string> data_root, out, generic_corpus;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> max_steps;
};

std::shared_ptr<const FrameSource> load_corpus(const fs::path& dir, int size) {
  std::vector<ImageTensor> images;
  for (const auto& f : png_files(dir)) {
    ImageTensor img = resize_crop(load_image(f, ValueRange::unit), size);
    if (img.channels() == 1) {
      ImageTensor rgb(3, img.height(), img.width(), ValueRange::unit);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
          for (int x = 0; x < img.width(); ++x) rgb.at(c, y, x) = img.at(0, y, x);
      img = std::move(rgb);
    }
    images.push_back(to_range(img, ValueRange::signed_unit));
  }
  return std::make_shared<MemorySource>(MemorySource::from_images(images));
}

int cmd_train(const TrainOptions& o) {
  require(o.step == "1a" || o.step == "1b" || o.step == "2" || o.step == "all", ErrorKind::usage,
          "--step must be one of 1a, 1b, 2, all");
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "epoch_scale", o.epoch_scale);
  flag(flags, "data_root", o.data_root);
  flag(flags, "out_root", o.out);
  flag(flags, "generic_corpus", o.generic_corpus);
  flag(flags, "seed", o.seed);
  const RunConfig cfg = resolve(o.common, flags);
  echo_config(cfg);
  const fs::path out = cfg.out_root;
  const fs::path ckpt_dir = out / "checkpoints";
  const bool have_corpus = !cfg.generic_corpus.empty();

  TrainState state;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume, &cfg.network);
    std::cout << "resuming from " << o.resume << " at step " << state.cursor.step << " ("
              << to_string(state.cursor.phase) << " phase)\n";
  } else if (o.step == "1b" && have_corpus) {
    const fs::path prior = out / "step1a.ckpt";
    require(fs::exists(prior), ErrorKind::file_missing,
            "step 1b needs " + prior.string() + " (run --step 1a first or pass --resume)");
    state = load_checkpoint(prior, &cfg.network);
  } else if (o.step == "2") {
    const fs::path prior = out / "step1b.ckpt";
    require(fs::exists(prior), ErrorKind::file_missing,
            "step 2 needs a step-1 checkpoint at " + prior.string() + " (run --step 1b first or pass --resume)");
    state = load_checkpoint(prior, &cfg.network);
  } else {
    state = TrainState::create(cfg.network, cfg.train);
  }

  TrainHooks hooks;
  hooks.checkpoint_dir = ckpt_dir;
  if (o.max_steps) hooks.stop_at_step = *o.max_steps;
  hooks.on_stage_end = [](const TrainState& st, const StageBoundary& b) {
    std::cout << "stage " << to_string(b.phase) << "/" << b.name << " done at step " << b.step;
    if (!st.history.empty()) std::cout << " (total loss " << st.history.back().loss.total << ")";
    std::cout << std::endl;
  };

  const auto started = std::chrono::steady_clock::now();
  RunStatus status = RunStatus::completed;
  auto run = [&](const char* name, TrainPhase phase, auto&& body) {
    if (status == RunStatus::paused || state.cursor.phase != phase) return;
    status = body();
    if (status == RunStatus::completed) {
      save_checkpoint(state, out / (std::string("step") + name + ".ckpt"));
      std::cout << "step " << name << " complete: " << (out / (std::string("step") + name + ".ckpt")).string()
                << "\n";
    }
  };
  auto user_split = [&] {
    return split_sessions(discover_sessions(cfg.data_root), AppearanceHoldout{cfg.holdout_tags});
  };

  fs::create_directories(out);
  if (o.step == "1a" || (o.step == "all" && have_corpus)) {
    require(have_corpus, ErrorKind::config, "step 1a needs generic_corpus (a directory of face images)");
    run("1a", TrainPhase::generic,
        [&] { return pretrain_generic(state, load_corpus(cfg.generic_corpus, state.network.image_size), hooks); });
  }
  if (o.step == "1b" || o.step == "all") {
    if (state.cursor.phase == TrainPhase::generic && !have_corpus) {
      state.cursor.phase = TrainPhase::user;
    }
    run("1b", TrainPhase::user, [&] { return finetune_user(state, user_split(), hooks); });
  }
  if (o.step == "2" || o.step == "all") {
    require(status == RunStatus::paused || state.cursor.phase == TrainPhase::occluded ||
                state.cursor.phase == TrainPhase::finished,
            ErrorKind::precondition, "step 2 needs a completed step 1");
    run("2", TrainPhase::occluded, [&] { return train_occluded(state, user_split(), hooks); });
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  save_checkpoint(state, out / "latest.ckpt");
  write_text(out / "train_log.csv", training_log_csv(state));
  nlohmann::json summary = run_summary(state);
  summary["status"] = status == RunStatus::completed ? "completed" : "paused";
  summary["requested_step"] = o.step;
  summary["wall_seconds"] = wall;
  summary["config"] = cfg.to_text();
  summary["config_hash"] = hex(cfg.hash());
  write_text(out / "run_summary.json", summary.dump(2) + "\n");
  std::cout << "status: " << summary["status"].get<std::string>() << " at step " << state.cursor.step << "\n"
            << "log: " << (out / "train_log.csv").string() << "\n"
            << "summary: " << (out / "run_summary.json").string() << "\n"
            << "checkpoint: " << (out / "latest.ckpt").string() << "\n";
  return 0;
}

// --- infer ------------------------------------------------------------------

struct InferOptions {
  CommonOptions common;
  std::string checkpoint, input, mask, out;
  std::optional<float> fill;
};

int cmd_infer(const InferOptions& o) {
  const RunConfig cfg = resolve(o.common, {});
  echo_config(cfg);
  const TrainState state = load_checkpoint(o.checkpoint);
  const Model model(state.network);
  const int size = state.network.image_size;
  const float fill = o.fill.value_or(state.config.occlusion_fill);
  std::optional<BinaryMask> mask;
  if (!o.mask.empty()) mask = load_mask(o.mask);
  const auto reconstruct = model_reconstructor(model, state.params);
  fs::create_directories(o.out);
  for (const auto& file : png_files(o.input)) {
    ImageTensor img = load_image(file, ValueRange::unit);
    if (img.height() != size || img.width() != size) img = resize_crop(img, size);
    require(img.channels() == 3, ErrorKind::unsupported_format, file.string() + ": expected an RGB image");
    img = to_range(img, ValueRange::signed_unit);
    Sample s;
    if (mask) {
      const BinaryMask m = (mask->height() == size && mask->width() == size) ? *mask : resize_crop_mask(*mask, size);
      s = make_sample(img, m, fill);
    } else {
      s.occluded = img;
      s.ground_truth = img;
      s.mask = BinaryMask(size, size);
    }
    const fs::path target = fs::path(o.out) / file.filename();
    save_image(to_range(reconstruct(s), ValueRange::unit), target);
    std::cout << file.string() << " -> " << target.string() << "\n";
  }
  return 0;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateCliOptions {
  CommonOptions common;
  std::vector<std::string> checkpoints, labels;
  std::optional<std::string> data_root;
  std::string out;
  bool oracle = false;
  bool masked_only = false;
};

int cmd_evaluate(const EvaluateCliOptions& o) {
  std::vector<std::pair<std::string, std::string>> flags;
  flag(flags, "data_root", o.data_root);
  const RunConfig cfg = resolve(o.common, flags);
  echo_config(cfg);
  require(!o.checkpoints.empty() || o.oracle, ErrorKind::usage, "give --checkpoint and/or --oracle");
  require(o.labels.empty() || o.labels.size() == o.checkpoints.size(), ErrorKind::usage,
          "--labels needs one label per --checkpoint");

  const DatasetSplit split = split_sessions(discover_sessions(cfg.data_root), AppearanceHoldout{cfg.holdout_tags});
  require(!split.test_sessions.empty(), ErrorKind::empty_input, "empty test split");
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const TrainState state = load_checkpoint(o.checkpoints[i]);
    const Model model(state.network);
    EvaluateOptions opts;
    opts.method_label = o.labels.empty() ? fs::path(o.checkpoints[i]).stem().string() : o.labels[i];
    opts.config_hash = network_hash(state.network);
    opts.masked_only = o.masked_only;
    reports.push_back(evaluate(model, state.params, split, opts, state.config.occlusion_fill));
  }
  if (o.oracle) {
    const SplitSource source(split, SplitRole::test, cfg.train.occlusion_fill);
    EvaluateOptions opts;
    opts.method_label = "oracle";
    opts.split_descriptor = split.descriptor();
    opts.config_hash = network_hash(cfg.network);
    opts.masked_only = o.masked_only;
    reports.push_back(evaluate(source, oracle_reconstructor(), opts));
  }
  const ComparisonTable table = compare_report(reports);
  const fs::path out = o.out;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(r.to_json());
  write_text(out / "report.json", all.dump(2) + "\n");
  write_text(out / "comparison.csv", table.to_csv());
  std::cout << table.to_text();
  for (const auto& r : reports)
    if (r.aggregate.masked_psnr)
      std::cout << r.method_label << " masked-region PSNR: " << *r.aggregate.masked_psnr << " dB\n";
  std::cout << "report: " << (out / "report.json").string() << "\n"
            << "table: " << (out / "comparison.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Person-specific face de-occlusion: data preparation, training, inference and evaluation"};
  app.require_subcommand(1);
  std::string device;
  app.add_option("--device", device, "Compute device (only 'cpu' is available)")->default_val("cpu");

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Ingest a frame directory and synthesise HMD masks");
  add_common(prepare, prep.common);
  prepare->add_option("--frames", prep.frames, "Directory of extracted PNG frames")->required();
  prepare->add_option("--data-root", prep.data_root, "Dataset root (default: $DEOCCL_DATA_ROOT or ./data)");
  prepare->add_option("--subject", prep.subject, "Subject id")->required();
  prepare->add_option("--session", prep.session, "Session id")->required();
  prepare->add_option("--appearance", prep.appearance, "Appearance tag (clothing/background/lighting)")->required();
  prepare->add_option("--size", prep.size, "Output frame side length");
  prepare->add_option("--mask-h-margin", prep.h_margin, "Horizontal mask margin (fraction of eye width)");
  prepare->add_option("--mask-v-margin", prep.v_margin, "Vertical mask margin (fraction of eye height)");
  prepare->add_option("--mask-shape", prep.mask_shape, "rectangle or rounded-rectangle");
  prepare->add_option("--provider", prep.provider, "Landmark provider name");
  prepare->add_option("--face-box", prep.face_box, "Crop box: x y width height")->expected(4);
  prepare->add_flag("--no-upscale", prep.no_upscale, "Refuse to upscale frames smaller than --size");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Run the staged training schedule");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--step", train.step, "1a (generic pretraining), 1b (user finetuning), 2 (occluded), all")
      ->capture_default_str();
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_option("--epoch-scale", train.epoch_scale, "Multiply every stage's epoch count");
  train_cmd->add_option("--data-root", train.data_root, "Dataset root");
  train_cmd->add_option("--out", train.out, "Output directory for checkpoints and logs");
  train_cmd->add_option("--generic-corpus", train.generic_corpus, "Directory of generic face images for step 1a");
  train_cmd->add_option("--seed", train.seed, "Seed for initialisation and shuffling");
  train_cmd->add_option("--max-steps", train.max_steps, "Pause once this many steps have run in total");

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Reconstruct occluded faces with a trained checkpoint");
  add_common(infer_cmd, infer.common);
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required();
  infer_cmd->add_option("--input", infer.input, "Image or directory of images")->required();
  infer_cmd->add_option("--mask", infer.mask, "Mask to composite onto the inputs first (simulation mode)");
  infer_cmd->add_option("--fill", infer.fill, "Occlusion fill value in [-1, 1]");
  infer_cmd->add_option("--out", infer.out, "Output directory")->required();

  EvaluateCliOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score checkpoints on the held-out appearance sessions");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--checkpoint", eval.checkpoints, "Checkpoint to score (repeatable)");
  eval_cmd->add_option("--labels", eval.labels, "Method label per checkpoint")->delimiter(',');
  eval_cmd->add_option("--data-root", eval.data_root, "Dataset root");
  eval_cmd->add_option("--out", eval.out, "Output directory for report.json and comparison.csv")->required();
  eval_cmd->add_flag("--oracle", eval.oracle, "Add a row for a generator that returns the ground truth");
  eval_cmd->add_flag("--masked-only", eval.masked_only, "Also report PSNR over the masked region");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    require(device == "cpu", ErrorKind::usage, "unsupported device '" + device + "'");
    if (*prepare) return cmd_prepare(prep);
    if (*train_cmd) return cmd_train(train);
    if (*infer_cmd) return cmd_infer(infer);
    if (*eval_cmd) return cmd_evaluate(eval);
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
