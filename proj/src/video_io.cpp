#include "motionsel/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "motionsel/errors.hpp"

namespace motionsel {

TensorF normalize(const RawFrame& raw) {
  TensorF out(1, raw.c, raw.h, raw.w);
  const float scale = 2.0f / 255.0f;
  for (int ch = 0; ch < raw.c; ++ch)
    for (int y = 0; y < raw.h; ++y)
      for (int x = 0; x < raw.w; ++x)
        out.at(0, ch, y, x) = scale * static_cast<float>(raw.at(y, x, ch)) - 1.0f;
  return out;
}

RawFrame denormalize(const TensorF& frame) {
  RawFrame out;
  out.h = frame.h;
  out.w = frame.w;
  out.c = frame.c;
  out.pixels.resize(static_cast<size_t>(frame.h) * frame.w * frame.c);
  for (int ch = 0; ch < frame.c; ++ch)
    for (int y = 0; y < frame.h; ++y)
      for (int x = 0; x < frame.w; ++x) {
        float v = (frame.at(0, ch, y, x) + 1.0f) * 127.5f;
        v = std::clamp(v, 0.0f, 255.0f);
        out.at(y, x, ch) = static_cast<uint8_t>(std::floor(v + 0.5f));
      }
  return out;
}

std::string format_indexed_path(const std::string& pattern, int index) {
  char buf[4096];
  int n = std::snprintf(buf, sizeof(buf), pattern.c_str(), index);
  if (n < 0 || n >= static_cast<int>(sizeof(buf)))
    throw ArgumentError("bad path pattern: " + pattern);
  return std::string(buf, n);
}

Clip load_clip(const std::string& path_pattern, std::optional<std::pair<int, int>> frame_range) {
  std::vector<int> indices;
  if (frame_range) {
    if (frame_range->second < frame_range->first)
      throw ArgumentError("empty frame range");
    for (int i = frame_range->first; i <= frame_range->second; ++i) indices.push_back(i);
  } else {
    int start = -1;
    for (int cand : {0, 1})
      if (std::filesystem::exists(format_indexed_path(path_pattern, cand))) {
        start = cand;
        break;
      }
    if (start < 0) throw NotFoundError("no frames match pattern: " + path_pattern);
    for (int i = start; std::filesystem::exists(format_indexed_path(path_pattern, i)); ++i)
      indices.push_back(i);
  }

  Clip clip;
  for (int idx : indices) {
    std::string path = format_indexed_path(path_pattern, idx);
    if (!std::filesystem::exists(path)) throw NotFoundError("missing frame: " + path);
    RawFrame raw = read_png(path);
    if (raw.h < 8 || raw.w < 8)
      throw FormatError("frame smaller than 8x8: " + path);
    if (!clip.frames.empty() &&
        (raw.h != clip.height() || raw.w != clip.width() || raw.c != clip.channels()))
      throw FormatError("frame shape mismatch at: " + path);
    clip.frames.push_back(normalize(raw));
  }
  if (clip.frames.empty()) throw NotFoundError("no frames match pattern: " + path_pattern);
  return clip;
}

Window sample_window(const Clip& clip, int delta, int k, Rng& rng, int limit) {
  if (delta < 1 || k < 0) throw ArgumentError("sample_window: need delta >= 1 and K >= 0");
  if (limit > clip.length())
    throw ArgumentError("sample_window: limit exceeds clip length");
  int length = limit > 0 ? limit : clip.length();
  int span = delta + k + 1;
  if (length < span)
    throw ArgumentError("sample_window: sampling range " + std::to_string(length) +
                        " < window span " + std::to_string(span));
  int max_start = length - span;
  Window win;
  win.start_index = static_cast<int>(rng.uniform_int(0, max_start));
  win.delta = delta;
  win.frames.assign(clip.frames.begin() + win.start_index,
                    clip.frames.begin() + win.start_index + span);
  return win;
}

TensorF flip_lr_frame(const TensorF& frame) {
  TensorF out(frame.b, frame.c, frame.h, frame.w);
  for (int bi = 0; bi < frame.b; ++bi)
    for (int ch = 0; ch < frame.c; ++ch)
      for (int y = 0; y < frame.h; ++y)
        for (int x = 0; x < frame.w; ++x)
          out.at(bi, ch, y, x) = frame.at(bi, ch, y, frame.w - 1 - x);
  return out;
}

Window flip_lr(const Window& window, bool apply) {
  if (!apply) return window;
  Window out = window;
  for (auto& f : out.frames) f = flip_lr_frame(f);
  return out;
}

void write_error_map(const TensorF& pred, const TensorF& gt, const std::string& path) {
  require_same_shape(pred, gt, "write_error_map");
  TensorF err(1, 1, pred.h, pred.w);
  float max_err = 0.0f;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x) {
      float acc = 0.0f;
      for (int ch = 0; ch < pred.c; ++ch) {
        float d = pred.at(0, ch, y, x) - gt.at(0, ch, y, x);
        acc += d * d;
      }
      err.at(0, 0, y, x) = acc;
      max_err = std::max(max_err, acc);
    }

  RawFrame raw;
  raw.h = pred.h;
  raw.w = pred.w;
  raw.c = 1;
  raw.pixels.resize(static_cast<size_t>(pred.h) * pred.w);
  float scale = max_err > 0.0f ? 255.0f / max_err : 0.0f;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x)
      raw.at(y, x, 0) = static_cast<uint8_t>(std::floor(err.at(0, 0, y, x) * scale + 0.5f));
  write_png(path, raw);
}

void write_frame(const std::string& path, const TensorF& frame) {
  write_png(path, denormalize(frame));
}

}  // namespace motionsel
