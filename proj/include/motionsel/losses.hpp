#pragma once

#include <cmath>
#include <vector>

#include "motionsel/tensor.hpp"

// Reconstruction (L1) and motion (temporal total-variation matching) losses.
// All reductions are means over every element, so the motion weight keeps the
// same meaning across frame sizes. Subgradients at exact zeros are zero.

namespace motionsel {

struct LossConfig {
  double mu_motion = 10.0;
};

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* dpred = nullptr) {
  require_same_shape(pred, gt, "l1_loss");
  T acc = T(0);
  T inv = T(1) / static_cast<T>(pred.size());
  if (dpred) require_same_shape(pred, *dpred, "l1_loss grad");
  for (size_t i = 0; i < pred.data.size(); ++i) {
    T d = pred.data[i] - gt.data[i];
    acc += std::abs(d);
    if (dpred) dpred->data[i] += inv * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)));
  }
  return acc * inv;
}

// || |pred_t - pred_prev| - |gt_t - gt_prev| || averaged over elements.
template <typename T>
T motion_loss(const Tensor<T>& pred_t, const Tensor<T>& pred_prev, const Tensor<T>& gt_t,
              const Tensor<T>& gt_prev, Tensor<T>* dpred_t = nullptr,
              Tensor<T>* dpred_prev = nullptr) {
  require_same_shape(pred_t, pred_prev, "motion_loss");
  require_same_shape(pred_t, gt_t, "motion_loss");
  require_same_shape(gt_t, gt_prev, "motion_loss");
  T acc = T(0);
  T inv = T(1) / static_cast<T>(pred_t.size());
  for (size_t i = 0; i < pred_t.data.size(); ++i) {
    T a = pred_t.data[i] - pred_prev.data[i];
    T b = gt_t.data[i] - gt_prev.data[i];
    T r = std::abs(a) - std::abs(b);
    acc += std::abs(r);
    if (dpred_t) {
      T sr = r > T(0) ? T(1) : (r < T(0) ? T(-1) : T(0));
      T sa = a > T(0) ? T(1) : (a < T(0) ? T(-1) : T(0));
      T g = inv * sr * sa;
      dpred_t->data[i] += g;
      dpred_prev->data[i] -= g;
    }
  }
  return acc * inv;
}

template <typename T>
struct LossBreakdown {
  T total = T(0);
  T l1 = T(0);
  T motion = T(0);
};

// Loss over a predicted sub-sequence: summed L1 plus the weighted motion term
// for every prediction after the first (the first has no predicted
// predecessor, matching the indicator in the objective). prev_gt_for_first is
// accepted for signature completeness but unused under that convention.
template <typename T>
LossBreakdown<T> sequence_loss(const std::vector<Tensor<T>>& preds,
                               const std::vector<Tensor<T>>& gts, const LossConfig& cfg,
                               std::vector<Tensor<T>>* dpreds = nullptr,
                               const Tensor<T>* /*prev_gt_for_first*/ = nullptr) {
  if (preds.empty() || preds.size() != gts.size())
    throw ArgumentError("sequence_loss: need equal, nonzero prediction/target counts");
  if (dpreds) {
    dpreds->clear();
    for (const auto& p : preds) {
      Tensor<T> z = Tensor<T>::zeros_like(p);
      dpreds->push_back(std::move(z));
    }
  }
  LossBreakdown<T> out;
  T mu = static_cast<T>(cfg.mu_motion);
  for (size_t t = 0; t < preds.size(); ++t) {
    out.l1 += l1_loss(preds[t], gts[t], dpreds ? &(*dpreds)[t] : nullptr);
    if (t > 0) {
      Tensor<T>* dt = nullptr;
      Tensor<T>* dp = nullptr;
      std::vector<Tensor<T>> scratch;
      if (dpreds && mu != T(0)) {
        scratch.emplace_back(Tensor<T>::zeros_like(preds[t]));
        scratch.emplace_back(Tensor<T>::zeros_like(preds[t]));
        dt = &scratch[0];
        dp = &scratch[1];
      }
      T m = motion_loss(preds[t], preds[t - 1], gts[t], gts[t - 1], dt, dp);
      out.motion += m;
      if (dt) {
        (*dpreds)[t].add_scaled(*dt, mu);
        (*dpreds)[t - 1].add_scaled(*dp, mu);
      }
    }
  }
  out.total = out.l1 + mu * out.motion;
  return out;
}

}  // namespace motionsel
