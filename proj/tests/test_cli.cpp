#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "motionsel/synth.hpp"
#include "motionsel/video_io.hpp"

namespace fs = std::filesystem;
using namespace motionsel;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int serial = 0;
  std::string out = "/tmp/motionsel_cli_out_" + std::to_string(serial);
  std::string err = "/tmp/motionsel_cli_err_" + std::to_string(serial);
  ++serial;
  std::string cmd = env + (env.empty() ? "" : " ") + MOTIONSEL_BIN + " " + args + " >" + out +
                    " 2>" + err;
  int status = std::system(cmd.c_str());
  RunResult res;
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  res.out = slurp(out);
  res.err = slurp(err);
  std::remove(out.c_str());
  std::remove(err.c_str());
  return res;
}

// One workspace per test binary run: a tiny synthetic clip on disk, a smoke
// config pointing at it, and a checkpoint trained through the real CLI.
struct Workspace {
  std::string root;
  std::string config;
  std::string checkpoint;
  int clip_length = 14;

  std::string gt_pattern() const { return root + "/data/f_%03d.png"; }
};

std::string smoke_config_text(const Workspace& ws) {
  std::ostringstream cfg;
  cfg << "[run]\nvariant = M2\n"
      << "[model]\nn = 4\nl = 4\ndelta = 2\nchannels = 1\nheight = 16\nwidth = 16\n"
      << "[selector]\nndf = 4\n"
      << "[train]\nlr0 = 1e-3\nbatch_size = 2\niters_per_k = 5\nstage2_epochs_max = 2\n"
      << "early_stop_patience = 2\nseed = 5\nlog_every = 5\n"
      << "[data]\nclip = " << ws.gt_pattern() << "\nout_dir = " << ws.root << "/train_out\n";
  return cfg.str();
}

const Workspace& workspace() {
  static Workspace ws = [] {
    Workspace w;
    w.root = "/tmp/motionsel_cli_ws";
    fs::remove_all(w.root);
    fs::create_directories(w.root + "/data");

    SynthSpec spec;
    spec.kind = SynthKind::kOscillatingSquare;
    spec.h = 16;
    spec.w = 16;
    spec.length = w.clip_length;
    spec.period = 8;
    spec.amplitude = 2;
    spec.seed = 3;
    Clip clip = generate(spec);
    for (int i = 0; i < clip.length(); ++i)
      write_frame(format_indexed_path(w.gt_pattern(), i), clip.frames[i]);

    w.config = w.root + "/smoke.cfg";
    std::ofstream(w.config) << smoke_config_text(w);

    RunResult train = run_cli("train --config " + w.config);
    REQUIRE_MESSAGE(train.code == 0, train.err);
    w.checkpoint = w.root + "/train_out/final.bin";
    REQUIRE(fs::exists(w.checkpoint));
    return w;
  }();
  return ws;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2, help exits 0") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("train").code == 2);           // missing --config
  CHECK(run_cli("predict --config x").code == 2);  // missing required flags
  CHECK(run_cli("frobnicate").code == 2);
  CHECK(run_cli("train --config x --bogus").code == 2);
}

TEST_CASE("cli: train smoke run writes checkpoint and log") {
  const Workspace& ws = workspace();
  RunResult train = run_cli("train --config " + ws.config);  // second run, fresh but same out dir
  CHECK(train.code == 0);
  CHECK(train.out.find("effective seed: 5") != std::string::npos);
  CHECK(fs::exists(ws.root + "/train_out/final.bin"));

  std::string log = slurp(ws.root + "/train_out/train_log.csv");
  CHECK(log.rfind("iteration,stage,K,", 0) == 0);
  CHECK(count_lines(log) >= 3);
}

TEST_CASE("cli: config problems exit 2 with line diagnostics") {
  const Workspace& ws = workspace();

  std::string bad = ws.root + "/bad.cfg";
  std::ofstream(bad) << "[model]\nn = 4\nl = 4\nheight = 8\nwidth = 8\nbogus_key = 1\n";
  RunResult res = run_cli("train --config " + bad);
  CHECK(res.code == 2);
  CHECK(res.err.find("bad.cfg:6") != std::string::npos);
  CHECK(res.err.find("bogus_key") != std::string::npos);

  CHECK(run_cli("train --config " + ws.root + "/missing.cfg").code == 2);

  // Parseable config whose clip pattern points nowhere.
  std::string orphan = ws.root + "/orphan.cfg";
  std::ofstream(orphan) << "[model]\nn = 4\nl = 4\ndelta = 2\nheight = 8\nwidth = 8\n"
                        << "[data]\nclip = " << ws.root << "/nothere/f_%03d.png\n";
  CHECK(run_cli("train --config " + orphan).code == 2);
}

TEST_CASE("cli: predict writes frames and an alpha trace") {
  const Workspace& ws = workspace();
  std::string out = ws.root + "/pred";
  fs::remove_all(out);

  RunResult res = run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint +
                          " --entry 0 --horizon 3 --out " + out + " --seed 9");
  CHECK(res.code == 0);
  CHECK(res.out.find("effective seed: 9") != std::string::npos);
  for (int j = 0; j < 3; ++j)
    CHECK(fs::exists(format_indexed_path(out + "/pred_%03d.png", j)));
  CHECK_FALSE(fs::exists(format_indexed_path(out + "/pred_%03d.png", 3)));

  // header + horizon * (L/2) * N data rows
  std::string trace = slurp(out + "/alpha_trace.csv");
  CHECK(count_lines(trace) == 1 + 3 * 2 * 4);
  CHECK(trace.rfind("frame,row,channel,alpha_scaled", 0) == 0);
  CHECK(trace.find("\n2,0,0,") != std::string::npos);  // first predicted frame = entry + delta
}

TEST_CASE("cli: predict edge cases") {
  const Workspace& ws = workspace();
  std::string out = ws.root + "/pred_edge";
  fs::remove_all(out);

  RunResult zero = run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint +
                           " --horizon 0 --out " + out);
  CHECK(zero.code == 0);
  CHECK_FALSE(fs::exists(out));  // nothing written, not even the directory

  RunResult far = run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint +
                          " --entry 100 --horizon 2 --out " + out);
  CHECK(far.code == 2);

  RunResult neg = run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint +
                          " --entry 0 --horizon -2 --out " + out);
  CHECK(neg.code == 2);

  RunResult nock = run_cli("predict --config " + ws.config + " --checkpoint " + ws.root +
                           "/no_such.bin --horizon 2 --out " + out);
  CHECK(nock.code == 2);
}

TEST_CASE("cli: architecture mismatch between config and checkpoint exits 4") {
  const Workspace& ws = workspace();
  std::string wide = ws.root + "/wide.cfg";
  {
    std::ostringstream cfg;
    cfg << "[model]\nn = 6\nl = 4\ndelta = 2\nchannels = 1\nheight = 16\nwidth = 16\n"
        << "[data]\nclip = " << ws.gt_pattern() << "\n";
    std::ofstream(wide) << cfg.str();
  }
  RunResult res = run_cli("predict --config " + wide + " --checkpoint " + ws.checkpoint +
                          " --horizon 2 --out " + ws.root + "/pred_wide");
  CHECK(res.code == 4);
  CHECK(res.err.find("checkpoint architecture") != std::string::npos);

  std::string nosel = ws.root + "/nosel.cfg";
  {
    std::ostringstream cfg;
    cfg << "[run]\nvariant = B1\n"
        << "[model]\nn = 4\nl = 4\ndelta = 2\nchannels = 1\nheight = 16\nwidth = 16\n"
        << "[data]\nclip = " << ws.gt_pattern() << "\n";
    std::ofstream(nosel) << cfg.str();
  }
  CHECK(run_cli("predict --config " + nosel + " --checkpoint " + ws.checkpoint +
                " --horizon 2 --out " + ws.root + "/pred_nosel")
            .code == 4);
}

TEST_CASE("cli: evaluate on exact copies saturates the metrics") {
  const Workspace& ws = workspace();
  std::string pred = ws.root + "/copies";
  fs::remove_all(pred);
  fs::create_directories(pred);
  for (int j = 0; j < 3; ++j)
    fs::copy_file(format_indexed_path(ws.gt_pattern(), 2 + j),
                  format_indexed_path(pred + "/pred_%03d.png", j));

  RunResult res = run_cli("evaluate --pred " + pred + " --gt " + ws.gt_pattern() + " --gt-start 2");
  CHECK(res.code == 0);
  CHECK(res.out.find("sequence") != std::string::npos);

  std::string report = slurp(pred + "/report.csv");
  CHECK(report.rfind("horizon,mse,psnr,ssim", 0) == 0);
  double mse = -1, psnr = -1, ssim = -1;
  size_t avg = report.find("avg,");
  REQUIRE(avg != std::string::npos);
  REQUIRE(std::sscanf(report.c_str() + avg, "avg,%lf,%lf,%lf", &mse, &psnr, &ssim) == 3);
  CHECK(mse == 0.0);
  CHECK(psnr == 100.0);
  CHECK(ssim == 1.0);
  CHECK(fs::exists(pred + "/b0_report.csv"));
}

TEST_CASE("cli: copy-last predictions reproduce the B0 report bit for bit") {
  const Workspace& ws = workspace();
  std::string pred = ws.root + "/copylast";
  fs::remove_all(pred);
  fs::create_directories(pred);
  for (int j = 0; j < 4; ++j)
    fs::copy_file(format_indexed_path(ws.gt_pattern(), 4),
                  format_indexed_path(pred + "/pred_%03d.png", j));

  RunResult res = run_cli("evaluate --pred " + pred + " --gt " + ws.gt_pattern() + " --gt-start 5");
  CHECK(res.code == 0);
  std::string main_report = slurp(pred + "/report.csv");
  std::string b0_report = slurp(pred + "/b0_report.csv");
  CHECK(main_report.size() > 0);
  CHECK(main_report == b0_report);
}

TEST_CASE("cli: evaluate rejects empty and mismatched inputs") {
  const Workspace& ws = workspace();
  std::string empty = ws.root + "/emptypred";
  fs::create_directories(empty);
  CHECK(run_cli("evaluate --pred " + empty + " --gt " + ws.gt_pattern()).code == 2);

  // 13 predictions vs a 14-frame clip starting at 2: ground truth runs out.
  std::string many = ws.root + "/manypred";
  fs::remove_all(many);
  fs::create_directories(many);
  for (int j = 0; j < 13; ++j)
    fs::copy_file(format_indexed_path(ws.gt_pattern(), 0),
                  format_indexed_path(many + "/pred_%03d.png", j));
  CHECK(run_cli("evaluate --pred " + many + " --gt " + ws.gt_pattern() + " --gt-start 2").code ==
        2);

  CHECK(run_cli("evaluate --pred " + ws.root + "/no_dir --gt " + ws.gt_pattern()).code == 2);
}

TEST_CASE("cli: analyze emits decomposition, curves and temporal averages") {
  const Workspace& ws = workspace();
  std::string out = ws.root + "/ana";
  fs::remove_all(out);

  RunResult res = run_cli("analyze --config " + ws.config + " --checkpoint " + ws.checkpoint +
                          " --entry 1 --horizon 2 --out " + out);
  CHECK(res.code == 0);
  int pngs = 0;
  for (const auto& entry : fs::directory_iterator(out))
    if (entry.path().extension() == ".png") ++pngs;
  CHECK(pngs == 3 * 2 + 2);  // full/fg/bg per step + the two temporal averages
  for (int j = 0; j < 2; ++j) {
    CHECK(fs::exists(format_indexed_path(out + "/full_%03d.png", j)));
    CHECK(fs::exists(format_indexed_path(out + "/foreground_%03d.png", j)));
    CHECK(fs::exists(format_indexed_path(out + "/background_%03d.png", j)));
  }
  CHECK(fs::exists(out + "/temporal_avg_pred.png"));
  CHECK(fs::exists(out + "/temporal_avg_gt.png"));
  CHECK(count_lines(slurp(out + "/alpha_curves.csv")) == 1 + 2 * 2 * 4);

  // Re-running lands byte-identical artifacts.
  std::string out2 = ws.root + "/ana2";
  fs::remove_all(out2);
  RunResult rerun = run_cli("analyze --config " + ws.config + " --checkpoint " + ws.checkpoint +
                            " --entry 1 --horizon 2 --out " + out2);
  CHECK(rerun.code == 0);
  for (const auto& entry : fs::directory_iterator(out)) {
    std::string name = entry.path().filename().string();
    CAPTURE(name);
    CHECK(slurp(out + "/" + name) == slurp(out2 + "/" + name));
  }
}

TEST_CASE("cli: predict twice gives identical frames") {
  const Workspace& ws = workspace();
  std::string a = ws.root + "/det_a";
  std::string b = ws.root + "/det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  std::string tail = " --entry 0 --horizon 4 --out ";
  CHECK(run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint + tail + a)
            .code == 0);
  CHECK(run_cli("predict --config " + ws.config + " --checkpoint " + ws.checkpoint + tail + b)
            .code == 0);
  for (int j = 0; j < 4; ++j) {
    CAPTURE(j);
    CHECK(slurp(format_indexed_path(a + "/pred_%03d.png", j)) ==
          slurp(format_indexed_path(b + "/pred_%03d.png", j)));
  }
  CHECK(slurp(a + "/alpha_trace.csv") == slurp(b + "/alpha_trace.csv"));
}

TEST_CASE("cli: MOTIONSEL_LOG controls verbosity") {
  const Workspace& ws = workspace();
  std::string out = ws.root + "/logtest";
  fs::remove_all(out);
  std::string args = "analyze --config " + ws.config + " --checkpoint " + ws.checkpoint +
                     " --entry 0 --horizon 1 --out " + out;

  RunResult quiet = run_cli(args, "MOTIONSEL_LOG=quiet");
  CHECK(quiet.code == 0);
  CHECK(quiet.err.empty());

  fs::remove_all(out);
  RunResult debug = run_cli(args, "MOTIONSEL_LOG=debug");
  CHECK(debug.code == 0);
  CHECK(debug.err.find("decomposition") != std::string::npos);
}
