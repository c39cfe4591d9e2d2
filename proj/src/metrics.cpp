#include "motionsel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace motionsel {

namespace {

double to8(float v) {
  double x = std::clamp(static_cast<double>(v), -1.0, 1.0);
  return (x + 1.0) * 127.5;
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-region Gaussian filter: (h, w) -> (h-10, w-10).
std::vector<double> blur_valid(const std::vector<double>& img, int h, int w) {
  static const std::vector<double> k = gaussian_kernel();
  const int wv = w - kWin + 1;
  std::vector<double> rows(static_cast<size_t>(h) * wv);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * img[y * w + x + i];
      rows[y * wv + x] = acc;
    }
  const int hv = h - kWin + 1;
  std::vector<double> out(static_cast<size_t>(hv) * wv);
  for (int y = 0; y < hv; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * rows[(y + i) * wv + x];
      out[y * wv + x] = acc;
    }
  return out;
}

}  // namespace

double mse(const TensorF& a, const TensorF& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = to8(a.data[i]) - to8(b.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr_from_mse(double mse) {
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double psnr(const TensorF& a, const TensorF& b) { return psnr_from_mse(mse(a, b)); }

double ssim(const TensorF& a, const TensorF& b) {
  require_same_shape(a, b, "ssim");
  if (a.h < kWin || a.w < kWin)
    throw ArgumentError("ssim: frames must be at least 11x11, got " + a.shape_str());

  const int h = a.h, w = a.w;
  const size_t n = static_cast<size_t>(h) * w;
  double total = 0;
  int windows = 0;
  for (int bi = 0; bi < a.b; ++bi)
    for (int ci = 0; ci < a.c; ++ci) {
      std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
      const float* ap = a.plane(bi, ci);
      const float* bp = b.plane(bi, ci);
      for (size_t i = 0; i < n; ++i) {
        pa[i] = to8(ap[i]);
        pb[i] = to8(bp[i]);
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
      }
      auto mu_a = blur_valid(pa, h, w);
      auto mu_b = blur_valid(pb, h, w);
      auto e_aa = blur_valid(paa, h, w);
      auto e_bb = blur_valid(pbb, h, w);
      auto e_ab = blur_valid(pab, h, w);
      for (size_t i = 0; i < mu_a.size(); ++i) {
        double va = e_aa[i] - mu_a[i] * mu_a[i];
        double vb = e_bb[i] - mu_b[i] * mu_b[i];
        double cov = e_ab[i] - mu_a[i] * mu_b[i];
        double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
        double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
        total += num / den;
        ++windows;
      }
    }
  return total / windows;
}

PredictionReport evaluate(const Clip& pred, const Clip& gt, const std::string& label) {
  if (pred.length() == 0) throw ArgumentError("evaluate: empty prediction");
  if (pred.length() != gt.length())
    throw ArgumentError("evaluate: prediction and ground truth lengths differ (" +
                        std::to_string(pred.length()) + " vs " + std::to_string(gt.length()) +
                        ")");
  PredictionReport r;
  r.label = label;
  for (int t = 0; t < pred.length(); ++t) {
    r.mse_frames.push_back(mse(pred.frames[t], gt.frames[t]));
    r.psnr_frames.push_back(psnr(pred.frames[t], gt.frames[t]));
    r.ssim_frames.push_back(ssim(pred.frames[t], gt.frames[t]));
  }
  auto mean = [](const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  r.avg_mse = mean(r.mse_frames);
  r.avg_psnr = mean(r.psnr_frames);
  r.avg_ssim = mean(r.ssim_frames);
  return r;
}

PredictionReport baseline_b0(const TensorF& conditioning_last, const Clip& gt_future) {
  if (gt_future.length() == 0) throw ArgumentError("baseline_b0: empty future");
  Clip copy_last;
  for (int t = 0; t < gt_future.length(); ++t) copy_last.frames.push_back(conditioning_last);
  return evaluate(copy_last, gt_future, "B0");
}

void write_report_csv(const PredictionReport& report, const std::string& path) {
  std::ostringstream out;
  out << "horizon,mse,psnr,ssim\n";
  char line[160];
  for (int t = 0; t < report.horizon(); ++t) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g\n", t + 1, report.mse_frames[t],
                  report.psnr_frames[t], report.ssim_frames[t]);
    out << line;
  }
  std::snprintf(line, sizeof(line), "avg,%.9g,%.9g,%.9g\n", report.avg_mse, report.avg_psnr,
                report.avg_ssim);
  out << line;

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write report: " + path);
  const std::string text = out.str();
  const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  std::fclose(f);
  if (!ok) throw IoError("short write: " + path);
}

std::string format_results_table(const std::vector<TableEntry>& entries) {
  std::vector<std::string> variants;
  std::vector<std::string> sequences;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  auto remember = [](std::vector<std::string>& seen, const std::string& v) {
    if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
  };
  for (const TableEntry& e : entries) {
    remember(variants, e.variant);
    remember(sequences, e.sequence);
    char cell[48];
    if (std::isnan(e.avg_ssim))  // PSNR-only entry (copy-last rows often are)
      std::snprintf(cell, sizeof(cell), "%.1f", e.avg_psnr);
    else
      std::snprintf(cell, sizeof(cell), "%.1f/%.3f", e.avg_psnr, e.avg_ssim);
    cells[{e.sequence, e.variant}] = cell;
  }

  size_t name_w = std::string("sequence").size();
  for (const auto& s : sequences) name_w = std::max(name_w, s.size());
  std::vector<size_t> col_w(variants.size());
  for (size_t i = 0; i < variants.size(); ++i) {
    col_w[i] = variants[i].size();
    for (const auto& s : sequences) {
      auto it = cells.find({s, variants[i]});
      if (it != cells.end()) col_w[i] = std::max(col_w[i], it->second.size());
    }
  }

  std::ostringstream out;
  auto pad = [&](const std::string& s, size_t w) {
    out << s << std::string(w - s.size() + 2, ' ');
  };
  pad("sequence", name_w);
  for (size_t i = 0; i < variants.size(); ++i) pad(variants[i], col_w[i]);
  out << "\n";
  for (const auto& s : sequences) {
    pad(s, name_w);
    for (size_t i = 0; i < variants.size(); ++i) {
      auto it = cells.find({s, variants[i]});
      pad(it == cells.end() ? std::string("-") : it->second, col_w[i]);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace motionsel
