#pragma once

#include <string>

#include "motionsel/video_io.hpp"

namespace motionsel {

enum class SynthKind { kOscillatingSquare, kTranslatingBar, kStatic };

SynthKind parse_synth_kind(const std::string& name);

struct SynthSpec {
  SynthKind kind = SynthKind::kOscillatingSquare;
  int h = 64;
  int w = 64;
  int length = 48;
  int period = 16;       // frames per motion cycle
  int amplitude = 4;     // orbit radius (square) or speed in px/frame (bar)
  uint64_t seed = 1;     // background texture seed
  int fg_value = 230;    // foreground gray level
};

// Deterministic clip: seeded smooth dark background, bright foreground on an
// integer-pixel periodic trajectory. Occluded background re-appears identical.
Clip generate(const SynthSpec& spec);

}  // namespace motionsel
