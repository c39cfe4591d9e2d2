#pragma once

#include <string>
#include <vector>

#include "motionsel/video_io.hpp"

namespace motionsel {

// Reconstruction metrics, computed on the denormalized 8-bit scale (0..255)
// as reals. Frames come in as [-1, 1] tensors.

double mse(const TensorF& a, const TensorF& b);

// 10*log10(255^2 / mse), capped at 100 dB (exact matches report the cap).
double psnr_from_mse(double mse);
double psnr(const TensorF& a, const TensorF& b);

// Mean local structural similarity: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, dynamic range 255, valid region only, averaged over
// channels for multi-channel frames.
double ssim(const TensorF& a, const TensorF& b);

struct PredictionReport {
  std::string label;  // B0 / B1 / M1 / M2 / free-form
  std::vector<double> mse_frames, psnr_frames, ssim_frames;
  double avg_mse = 0, avg_psnr = 0, avg_ssim = 0;

  int horizon() const { return static_cast<int>(mse_frames.size()); }
};

PredictionReport evaluate(const Clip& pred, const Clip& gt, const std::string& label);

// Copy-last baseline: every "prediction" is the last conditioning frame.
PredictionReport baseline_b0(const TensorF& conditioning_last, const Clip& gt_future);

// CSV: header, one line per horizon step, then an "avg" summary row.
void write_report_csv(const PredictionReport& report, const std::string& path);

// One measured variant on one sequence, for the results table.
struct TableEntry {
  std::string sequence;
  std::string variant;  // B0 / B1 / M1 / M2
  double avg_psnr = 0;
  double avg_ssim = 0;
};

// Aligned text table: one row per sequence, one PSNR/SSIM cell per variant.
std::string format_results_table(const std::vector<TableEntry>& entries);

}  // namespace motionsel
