#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace motionsel {

// 8-bit image as decoded from disk, HWC interleaved. C is 1 or 3.
struct RawFrame {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> pixels;  // h * w * c

  uint8_t& at(int y, int x, int ch) { return pixels[(static_cast<size_t>(y) * w + x) * c + ch]; }
  uint8_t at(int y, int x, int ch) const { return pixels[(static_cast<size_t>(y) * w + x) * c + ch]; }
};

// PNG codec (8-bit gray or RGB). Palette/alpha inputs are expanded/stripped
// on read; writes are always plain gray or RGB.
RawFrame read_png(const std::string& path);
void write_png(const std::string& path, const RawFrame& frame);

}  // namespace motionsel
