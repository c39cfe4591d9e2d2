#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "motionsel/adam.hpp"
#include "motionsel/model.hpp"

namespace motionsel {

inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk layout (all integers little-endian):
//   8 bytes   magic "MSELCKPT"
//   u32       format version
//   u32       config text length, then that many bytes of "key=value\n" lines
//   u32       array count
//   per array: u16 name length + name bytes, u8 ndims, u32 dims[ndims],
//              u64 element count, then count float32 values
struct CheckpointData {
  uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> config;            // sorted -> canonical text
  std::vector<std::pair<std::string, TensorF>> arrays;  // order preserved
};

void write_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint_file(const std::string& path);

// Counters and rng state carried alongside the weights so training resumes
// exactly where it left off.
struct TrainState {
  int64_t iteration = 0;
  int stage = 1;
  int64_t adam_steps = 0;
  std::string rng_state;
  double stage2_best = -1.0;  // best stage-2 loss seen (negative = none yet)
  int stage2_stall = 0;       // consecutive rollouts without 0.1% improvement
};

void save_checkpoint(const std::string& path, Model<float>& model, Adam<float>* adam,
                     const TrainState& state);

struct LoadedCheckpoint {
  Model<float> model;
  Adam<float> adam;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace motionsel
