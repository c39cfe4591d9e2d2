#include "motionsel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "motionsel/errors.hpp"
#include "motionsel/rng.hpp"

namespace motionsel {

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "oscillating_square") return SynthKind::kOscillatingSquare;
  if (name == "translating_bar") return SynthKind::kTranslatingBar;
  if (name == "static") return SynthKind::kStatic;
  throw ArgumentError("unknown synthetic clip kind: " + name);
}

namespace {

// Smooth dark texture: a coarse random grid interpolated bilinearly, so the
// background has gentle gradients instead of per-pixel noise.
RawFrame make_background(int h, int w, uint64_t seed) {
  Rng rng(seed);
  const int cell = 8;
  int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<float> grid(static_cast<size_t>(gh) * gw);
  for (auto& g : grid) g = static_cast<float>(rng.uniform(20.0, 90.0));

  RawFrame bg;
  bg.h = h;
  bg.w = w;
  bg.c = 1;
  bg.pixels.resize(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float fy = static_cast<float>(y) / cell, fx = static_cast<float>(x) / cell;
      int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
      float ty = fy - y0, tx = fx - x0;
      float v00 = grid[y0 * gw + x0], v01 = grid[y0 * gw + x0 + 1];
      float v10 = grid[(y0 + 1) * gw + x0], v11 = grid[(y0 + 1) * gw + x0 + 1];
      float v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
      bg.pixels[y * w + x] = static_cast<uint8_t>(std::lround(v));
    }
  return bg;
}

void paint_rect(RawFrame& frame, int top, int left, int rh, int rw, uint8_t value) {
  if (top < 0 || left < 0 || top + rh > frame.h || left + rw > frame.w)
    throw ArgumentError("synthetic object leaves the frame");
  for (int y = top; y < top + rh; ++y)
    for (int x = left; x < left + rw; ++x) frame.at(y, x, 0) = value;
}

int triangle_offset(int k, int period, int amplitude) {
  int half = period / 2;
  int m = k % period;
  return amplitude * (m <= half ? m : period - m);
}

}  // namespace

Clip generate(const SynthSpec& spec) {
  if (spec.h < 8 || spec.w < 8 || spec.length < 1)
    throw ArgumentError("synthetic clip needs h,w >= 8 and length >= 1");
  if (spec.period < 2) throw ArgumentError("synthetic clip period must be >= 2");

  RawFrame bg = make_background(spec.h, spec.w, spec.seed);
  uint8_t fg = static_cast<uint8_t>(std::clamp(spec.fg_value, 0, 255));

  Clip clip;
  for (int k = 0; k < spec.length; ++k) {
    RawFrame frame = bg;
    switch (spec.kind) {
      case SynthKind::kStatic:
        break;
      case SynthKind::kOscillatingSquare: {
        int side = std::max(4, spec.h / 4);
        double phase = 2.0 * std::numbers::pi * (k % spec.period) / spec.period;
        int dx = static_cast<int>(std::lround(spec.amplitude * std::cos(phase)));
        int dy = static_cast<int>(std::lround(spec.amplitude * std::sin(phase)));
        paint_rect(frame, (spec.h - side) / 2 + dy, (spec.w - side) / 2 + dx, side, side, fg);
        break;
      }
      case SynthKind::kTranslatingBar: {
        int travel = spec.amplitude * (spec.period / 2);
        int width = std::max(2, travel);
        int left = (spec.w - width - travel) / 2;
        if (left < 0) throw ArgumentError("translating bar does not fit the frame width");
        paint_rect(frame, 0, left + triangle_offset(k, spec.period, spec.amplitude),
                   spec.h, width, fg);
        break;
      }
    }
    clip.frames.push_back(normalize(frame));
  }
  return clip;
}

}  // namespace motionsel
