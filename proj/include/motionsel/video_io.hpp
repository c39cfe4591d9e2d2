#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motionsel/image.hpp"
#include "motionsel/rng.hpp"
#include "motionsel/tensor.hpp"

namespace motionsel {

// Ordered frame sequence in model range [-1, 1]. Each frame is (1, C, H, W).
struct Clip {
  std::vector<TensorF> frames;

  int length() const { return static_cast<int>(frames.size()); }
  int channels() const { return frames.empty() ? 0 : frames[0].c; }
  int height() const { return frames.empty() ? 0 : frames[0].h; }
  int width() const { return frames.empty() ? 0 : frames[0].w; }
};

// Contiguous training window: delta conditioning frames followed by K+1 targets.
struct Window {
  std::vector<TensorF> frames;
  int start_index = 0;
  int delta = 0;

  int targets() const { return static_cast<int>(frames.size()) - delta; }
};

// raw/255 mapped affinely onto [-1, 1].
TensorF normalize(const RawFrame& raw);

// Inverse of normalize: clamp to [-1, 1] range equivalent, round half up.
RawFrame denormalize(const TensorF& frame);

// Expands an index pattern like "dir/f_%03d.png". With a range, every index in
// [first, last] must exist; without one, indices are scanned upward from 0 (a
// leading index of 1 is also accepted) until the first gap.
Clip load_clip(const std::string& path_pattern,
               std::optional<std::pair<int, int>> frame_range = std::nullopt);

// Uniform random window of delta+k+1 frames. A positive limit restricts
// sampling to the clip's first `limit` frames (the training segment).
Window sample_window(const Clip& clip, int delta, int k, Rng& rng, int limit = 0);

Window flip_lr(const Window& window, bool apply);
TensorF flip_lr_frame(const TensorF& frame);

// Per-pixel squared error summed over channels, rescaled so the max maps to
// 255, written as a grayscale PNG.
void write_error_map(const TensorF& pred, const TensorF& gt, const std::string& path);

// Convenience wrappers used by the CLI and analysis outputs.
void write_frame(const std::string& path, const TensorF& frame);
std::string format_indexed_path(const std::string& pattern, int index);

}  // namespace motionsel
