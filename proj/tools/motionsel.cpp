#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "motionsel/analysis.hpp"
#include "motionsel/checkpoint.hpp"
#include "motionsel/config.hpp"
#include "motionsel/errors.hpp"
#include "motionsel/log.hpp"
#include "motionsel/metrics.hpp"
#include "motionsel/predictor.hpp"
#include "motionsel/trainer.hpp"
#include "motionsel/video_io.hpp"

namespace fs = std::filesystem;

namespace motionsel {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIncompatible = 4;

struct Options {
  std::string config_path;
  std::string checkpoint;
  std::string out;
  std::string pred_dir;
  std::string gt_pattern;
  int gt_start = 0;
  int entry = 0;
  int horizon = 0;
  std::optional<uint64_t> seed;
};

uint64_t report_seed(uint64_t s) {
  std::printf("effective seed: %llu\n", static_cast<unsigned long long>(s));
  return s;
}

// The checkpoint carries the architecture it was trained with; refuse to pair
// it with a config describing a different one.
void require_compatible(const RunConfig& cfg, const Model<float>& m) {
  const TransformerConfig& t = m.transformer.cfg;
  const TransformerConfig& e = cfg.model;
  if (t.n != e.n || t.l != e.l || t.ft != e.ft || t.delta != e.delta || t.c != e.c ||
      t.h != e.h || t.w != e.w)
    throw IncompatibleError("checkpoint architecture does not match config [model] section");
  if (m.use_selector() != cfg.selector_enabled)
    throw IncompatibleError(m.use_selector()
                                ? "checkpoint has a selector but the config disables it"
                                : "config enables the selector but the checkpoint has none");
}

std::vector<TensorF> conditioning_at(const Clip& clip, int entry, int delta) {
  if (entry < 0 || entry + delta > clip.length())
    throw ArgumentError("entry " + std::to_string(entry) + " leaves no room for " +
                        std::to_string(delta) + " conditioning frames in a clip of length " +
                        std::to_string(clip.length()));
  return {clip.frames.begin() + entry, clip.frames.begin() + entry + delta};
}

int cmd_train(const Options& opt) {
  RunConfig cfg = parse_run_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  if (!opt.out.empty()) cfg.data.out_dir = opt.out;
  cfg.validate();
  report_seed(cfg.train.seed);
  if (cfg.data.clip_pattern.empty())
    throw ArgumentError("config has no [data] clip pattern to train on");

  Clip clip = load_clip(cfg.data.clip_pattern, cfg.data.train_range);
  std::printf("training clip: %d frames of %dx%dx%d (%s)\n", clip.length(), clip.channels(),
              clip.height(), clip.width(), cfg.variant.c_str());

  fs::create_directories(cfg.data.out_dir);
  cfg.train.checkpoint_dir = cfg.data.out_dir;
  cfg.train.log_path = cfg.data.out_dir + "/train_log.csv";

  Model<float> model = cfg.make_model();
  Rng init_rng(cfg.train.seed);
  model.init(init_rng);

  Trainer trainer(model, clip, cfg.train);
  if (!opt.checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint);
    require_compatible(cfg, loaded.model);
    model = std::move(loaded.model);
    trainer.resume_from(loaded.adam, loaded.state);
    std::printf("resumed from %s at iteration %lld\n", opt.checkpoint.c_str(),
                static_cast<long long>(loaded.state.iteration));
  }
  trainer.run();

  const auto& recs = trainer.records();
  if (!recs.empty())
    std::printf("finished at iteration %lld, last logged loss %.6g\n",
                static_cast<long long>(trainer.iteration()), recs.back().total);
  std::printf("checkpoint: %s/final.bin\n", cfg.data.out_dir.c_str());
  return kExitOk;
}

int cmd_predict(const Options& opt) {
  RunConfig cfg = parse_run_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  report_seed(cfg.train.seed);

  LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint);
  require_compatible(cfg, loaded.model);
  if (opt.horizon == 0) return kExitOk;

  Clip clip = load_clip(cfg.data.clip_pattern, cfg.data.eval_range);
  int delta = cfg.model.delta;
  PredictionRequest req{conditioning_at(clip, opt.entry, delta), opt.horizon};
  auto [pred, trace] = predict_with_alpha_trace(loaded.model, req);

  std::string out_dir = opt.out.empty() ? cfg.data.out_dir : opt.out;
  fs::create_directories(out_dir);
  for (int j = 0; j < pred.length(); ++j)
    write_frame(format_indexed_path(out_dir + "/pred_%03d.png", j), pred.frames[j]);
  export_alpha_curves(AlphaTrace{std::move(trace), opt.entry + delta},
                      out_dir + "/alpha_trace.csv");
  std::printf("wrote %d frames and alpha_trace.csv to %s\n", pred.length(), out_dir.c_str());
  return kExitOk;
}

Clip load_pred_dir(const std::string& dir) {
  std::vector<std::string> paths;
  if (!fs::is_directory(dir)) throw ArgumentError("prediction directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      paths.push_back(entry.path().string());
  if (paths.empty()) throw ArgumentError("no .png frames in prediction directory: " + dir);
  std::sort(paths.begin(), paths.end());

  Clip clip;
  for (const auto& p : paths) {
    TensorF frame = normalize(read_png(p));
    if (!clip.frames.empty() &&
        (frame.c != clip.channels() || frame.h != clip.height() || frame.w != clip.width()))
      throw ArgumentError("prediction frames disagree in shape: " + p);
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

int cmd_evaluate(const Options& opt) {
  report_seed(opt.seed.value_or(0));
  Clip pred = load_pred_dir(opt.pred_dir);
  int count = pred.length();

  Clip gt = load_clip(opt.gt_pattern, {{opt.gt_start, opt.gt_start + count - 1}});
  PredictionReport report = evaluate(pred, gt, "pred");

  std::string report_path = opt.out.empty() ? opt.pred_dir + "/report.csv" : opt.out;
  write_report_csv(report, report_path);

  std::vector<TableEntry> table;
  std::string sequence = fs::path(opt.gt_pattern).parent_path().filename().string();
  if (sequence.empty()) sequence = "clip";
  table.push_back({sequence, report.label, report.avg_psnr, report.avg_ssim});

  if (opt.gt_start >= 1) {
    Clip before = load_clip(opt.gt_pattern, {{opt.gt_start - 1, opt.gt_start - 1}});
    PredictionReport b0 = baseline_b0(before.frames[0], gt);
    fs::path rp(report_path);
    std::string b0_path = (rp.parent_path() / ("b0_" + rp.filename().string())).string();
    write_report_csv(b0, b0_path);
    table.push_back({sequence, b0.label, b0.avg_psnr, b0.avg_ssim});
  } else {
    MSEL_WARN("gt range starts at frame 0; no previous frame for the B0 baseline");
  }

  std::fputs(format_results_table(table).c_str(), stdout);
  std::printf("report: %s\n", report_path.c_str());
  return kExitOk;
}

int cmd_analyze(const Options& opt) {
  RunConfig cfg = parse_run_config(opt.config_path);
  if (opt.seed) cfg.train.seed = *opt.seed;
  report_seed(cfg.train.seed);

  LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint);
  require_compatible(cfg, loaded.model);
  if (opt.horizon == 0) return kExitOk;

  Clip clip = load_clip(cfg.data.clip_pattern, cfg.data.eval_range);
  int delta = cfg.model.delta;
  std::vector<TensorF> conditioning = conditioning_at(clip, opt.entry, delta);

  std::string out_dir = opt.out.empty() ? cfg.data.out_dir : opt.out;
  fs::create_directories(out_dir);
  render_decomposition(loaded.model, conditioning, opt.horizon, out_dir);

  PredictionRequest req{conditioning, opt.horizon};
  auto [pred, trace] = predict_with_alpha_trace(loaded.model, req);
  export_alpha_curves(AlphaTrace{std::move(trace), opt.entry + delta},
                      out_dir + "/alpha_curves.csv");
  write_frame(out_dir + "/temporal_avg_pred.png", temporal_average(pred));

  int gt_first = opt.entry + delta;
  if (gt_first + opt.horizon <= clip.length()) {
    Clip gt;
    gt.frames.assign(clip.frames.begin() + gt_first, clip.frames.begin() + gt_first + opt.horizon);
    write_frame(out_dir + "/temporal_avg_gt.png", temporal_average(gt));
  } else {
    MSEL_WARN("clip ends before frame %d; skipping ground-truth temporal average",
              gt_first + opt.horizon - 1);
  }
  std::printf("wrote decomposition, alpha curves and temporal averages to %s\n", out_dir.c_str());
  return kExitOk;
}

int dispatch(const std::string& command, const Options& opt) {
  try {
    if (command == "train") return cmd_train(opt);
    if (command == "predict") return cmd_predict(opt);
    if (command == "evaluate") return cmd_evaluate(opt);
    return cmd_analyze(opt);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDiverged;
  } catch (const IncompatibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIncompatible;
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const NotFoundError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}

}  // namespace
}  // namespace motionsel

int main(int argc, char** argv) {
  using motionsel::Options;

  CLI::App app{"motion-selective video frame prediction"};
  app.require_subcommand(1);
  Options opt;
  uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", opt.config_path, "run configuration file")->required();
    auto* ck = sub->add_option("--checkpoint", opt.checkpoint, "model checkpoint");
    if (needs_checkpoint) ck->required();
    sub->add_option("--out", opt.out, "output directory override");
    sub->add_option("--seed", seed_flag, "override the configured seed");
  };

  CLI::App* train = app.add_subcommand("train", "run the two-stage training loop");
  add_common(train, false);

  CLI::App* predict = app.add_subcommand("predict", "recursively predict future frames");
  add_common(predict, true);
  predict->add_option("--entry", opt.entry, "index of the first conditioning frame");
  predict->add_option("--horizon", opt.horizon, "number of frames to predict")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "score predicted frames against ground truth");
  evaluate->add_option("--pred", opt.pred_dir, "directory of predicted .png frames")->required();
  evaluate->add_option("--gt", opt.gt_pattern, "ground-truth pattern like data/f_%03d.png")
      ->required();
  evaluate->add_option("--gt-start", opt.gt_start, "ground-truth index of the first prediction");
  evaluate->add_option("--out", opt.out, "report CSV path");
  evaluate->add_option("--seed", seed_flag, "override the configured seed");

  CLI::App* analyze = app.add_subcommand("analyze", "decomposition renders and alpha curves");
  add_common(analyze, true);
  analyze->add_option("--entry", opt.entry, "index of the first conditioning frame");
  analyze->add_option("--horizon", opt.horizon, "number of frames to analyze")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : motionsel::kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed_flag;
  return motionsel::dispatch(sub->get_name(), opt);
}
