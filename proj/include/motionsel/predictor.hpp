#pragma once

#include <utility>
#include <vector>

#include "motionsel/rollout.hpp"
#include "motionsel/video_io.hpp"

namespace motionsel {

// Inference-time recursion from an arbitrary entry point. Networks run in
// eval mode (frozen batch statistics); generated frames are fed back as
// [-1, 1] reals without re-quantization.

struct PredictionRequest {
  std::vector<TensorF> conditioning;  // delta frames, each (1, C, H, W)
  int horizon = 0;
};

inline Clip predict(Model<float>& model, const PredictionRequest& req) {
  if (req.horizon < 0) throw ArgumentError("predict: horizon must be >= 0");
  Clip out;
  if (req.horizon == 0) return out;
  Rollout<float> ro = rollout_forward(model, req.conditioning, req.horizon,
                                      /*bn_train=*/false, /*bn_update_running=*/false,
                                      /*with_caches=*/false);
  out.frames = std::move(ro.preds);
  return out;
}

inline std::pair<Clip, std::vector<TensorF>> predict_with_alpha_trace(
    Model<float>& model, const PredictionRequest& req) {
  if (req.horizon < 0) throw ArgumentError("predict: horizon must be >= 0");
  if (req.horizon == 0) return {Clip{}, {}};
  Rollout<float> ro = rollout_forward(model, req.conditioning, req.horizon,
                                      false, false, false);
  Clip out;
  out.frames = std::move(ro.preds);
  return {std::move(out), std::move(ro.alpha_trace)};
}

}  // namespace motionsel
