#include "motionsel/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "motionsel/log.hpp"
#include "motionsel/rollout.hpp"

namespace motionsel {

void export_alpha_curves(const AlphaTrace& trace, const std::string& path) {
  if (trace.alphas.empty()) throw ArgumentError("alpha export: empty trace");
  for (const TensorF& a : trace.alphas)
    require_same_shape(a, trace.alphas[0], "alpha export");

  std::ostringstream out;
  out << "frame,row,channel,alpha_scaled\n";
  const int n = trace.cols();
  char line[96];
  for (int t = 0; t < trace.length(); ++t) {
    const TensorF& a = trace.alphas[t];
    for (int r = 0; r < trace.rows(); ++r)
      for (int ch = 0; ch < n; ++ch) {
        const double scaled = static_cast<double>(n) * a.at(0, 0, r, ch);
        std::snprintf(line, sizeof(line), "%d,%d,%d,%.9g\n", trace.frame_offset + t, r, ch,
                      scaled);
        out << line;
      }
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write alpha curves: " + path);
  const std::string text = out.str();
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok) throw IoError("short write: " + path);
}

AlphaTrace import_alpha_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw NotFoundError("no such alpha curve file: " + path);
  std::string header;
  std::getline(in, header);
  if (header != "frame,row,channel,alpha_scaled")
    throw FormatError("unrecognized alpha curve header in " + path);

  // frame -> (row, channel) -> scaled value
  std::map<int, std::map<std::pair<int, int>, double>> by_frame;
  int rows = 0, cols = 0;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int frame, row, ch;
    double v;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lf", &frame, &row, &ch, &v) != 4)
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed alpha curve line");
    by_frame[frame][{row, ch}] = v;
    rows = std::max(rows, row + 1);
    cols = std::max(cols, ch + 1);
  }
  if (by_frame.empty()) throw FormatError("alpha curve file holds no data: " + path);

  AlphaTrace trace;
  trace.frame_offset = by_frame.begin()->first;
  for (auto& [frame, cells] : by_frame) {
    TensorF a(1, 1, rows, cols);
    for (auto& [rc, v] : cells)
      a.at(0, 0, rc.first, rc.second) = static_cast<float>(v / cols);
    trace.alphas.push_back(std::move(a));
  }
  return trace;
}

void render_decomposition(Model<float>& model, const std::vector<TensorF>& conditioning,
                          int horizon, const std::string& out_dir) {
  if (horizon < 1) throw ArgumentError("decomposition render: horizon must be >= 1");
  const TransformerConfig& tc = model.transformer.cfg;

  auto fn = [&](int j, const TensorF& stack) {
    TensorF alpha = model.use_selector()
                        ? model.selector->forward(stack, /*train=*/false,
                                                  /*update_running=*/false)
                        : uniform_alpha_hat<float>(stack.b, tc.rows(), tc.n);
    TensorF full = model.transformer.decompose(stack, alpha, DecomposeMode::kFull);
    TensorF fg = model.transformer.decompose(stack, alpha, DecomposeMode::kForeground);
    TensorF bg = model.transformer.decompose(stack, alpha, DecomposeMode::kBackground);

    DecompositionProbe<float> probe = model.transformer.probe_decomposition(stack, alpha);
    double worst = 0, scale = 0;
    for (int c = 0; c < probe.full_pre.c; ++c)
      for (int y = 0; y < probe.full_pre.h; ++y)
        for (int x = 0; x < probe.full_pre.w; ++x) {
          const double sum = probe.skip_part.at(0, c, y, x) + probe.modulated_part.at(0, c, y, x) +
                             probe.bias.at(0, c, 0, 0);
          const double ref = probe.full_pre.at(0, c, y, x);
          worst = std::max(worst, std::abs(sum - ref));
          scale = std::max(scale, std::abs(ref));
        }
    const double rel = worst / std::max(1.0, scale);
    if (rel > 1e-4)
      MSEL_WARN("decomposition step %d: split misses the forward pre-activation by %.3g", j, rel);
    else
      MSEL_DEBUG("decomposition step %d: split additivity error %.3g", j, rel);

    write_frame(format_indexed_path(out_dir + "/full_%03d.png", j), full);
    write_frame(format_indexed_path(out_dir + "/foreground_%03d.png", j), fg);
    write_frame(format_indexed_path(out_dir + "/background_%03d.png", j), bg);
    return full;
  };
  recursive_predict(conditioning, horizon, fn);
}

TensorF temporal_average(const Clip& clip) {
  if (clip.length() == 0) throw ArgumentError("temporal average: empty clip");
  TensorF acc = TensorF::zeros_like(clip.frames[0]);
  for (const TensorF& f : clip.frames) {
    require_same_shape(f, acc, "temporal average");
    acc.add_scaled(f, 1.0f);
  }
  const float inv = 1.0f / static_cast<float>(clip.length());
  for (float& v : acc.data) v *= inv;
  return acc;
}

}  // namespace motionsel
