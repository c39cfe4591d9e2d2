#pragma once

#include <string>
#include <vector>

#include "motionsel/model.hpp"
#include "motionsel/video_io.hpp"

namespace motionsel {

// Selection weights over time, one (1, 1, rows, N) matrix per generated frame.
struct AlphaTrace {
  std::vector<TensorF> alphas;
  int frame_offset = 0;  // clip index of the first traced frame

  int length() const { return static_cast<int>(alphas.size()); }
  int rows() const { return alphas.empty() ? 0 : alphas[0].h; }
  int cols() const { return alphas.empty() ? 0 : alphas[0].w; }
};

// CSV columns: frame, row, channel, alpha_scaled (the N-scaled weights).
void export_alpha_curves(const AlphaTrace& trace, const std::string& path);
AlphaTrace import_alpha_curves(const std::string& path);

// For each predicted step writes full_/foreground_/background_ PNGs into
// out_dir and logs the pre-activation additivity error of the split.
void render_decomposition(Model<float>& model, const std::vector<TensorF>& conditioning,
                          int horizon, const std::string& out_dir);

// Per-pixel arithmetic mean over the clip's frames.
TensorF temporal_average(const Clip& clip);

}  // namespace motionsel
