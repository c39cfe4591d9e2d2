#pragma once

#include <algorithm>
#include <deque>
#include <utility>
#include <vector>

#include "motionsel/model.hpp"

namespace motionsel {

// Recursive prediction: each step conditions on the last `delta` frames, where
// frames the model already generated replace their ground-truth counterparts.
// The forward pass records everything needed to backpropagate through the
// whole recursion.

template <typename T>
struct StepCache {
  TransformerCache<T> tcache;
  SelectorCache<T> scache;
  Tensor<T> alpha_hat;  // (B, 1, rows, N)
};

template <typename T>
struct Rollout {
  std::vector<Tensor<T>> preds;        // generated frames, one per step
  std::vector<Tensor<T>> alpha_trace;  // alpha_hat per step
  std::vector<int> generated_in_conditioning;  // per step: how many of the
                                               // delta conditioning frames
                                               // were model outputs
  std::vector<StepCache<T>> caches;    // populated only when requested
};

namespace detail {

template <typename T>
Tensor<T> stack_frames(const std::deque<const Tensor<T>*>& frames) {
  const Tensor<T>& f0 = *frames.front();
  Tensor<T> out(f0.b, static_cast<int>(frames.size()) * f0.c, f0.h, f0.w);
  int ci = 0;
  for (const Tensor<T>* f : frames) {
    for (int bi = 0; bi < f0.b; ++bi)
      for (int c = 0; c < f0.c; ++c)
        std::copy(f->plane(bi, c), f->plane(bi, c) + static_cast<size_t>(f0.h) * f0.w,
                  out.plane(bi, ci + c));
    ci += f0.c;
  }
  return out;
}

}  // namespace detail

// The sliding-window discipline shared by training and inference. `fn` maps
// (step index, channel-stacked conditioning frames) to the next frame; its
// outputs displace the oldest conditioning frame as the window advances.
// Returns the predictions plus, per step, how many conditioning frames were
// generated rather than given.
template <typename T, typename StepFn>
std::pair<std::vector<Tensor<T>>, std::vector<int>> recursive_predict(
    const std::vector<Tensor<T>>& context, int steps, StepFn&& fn) {
  if (context.empty()) throw ArgumentError("recursive prediction needs context frames");
  for (const Tensor<T>& f : context)
    require_same_shape(f, context.front(), "recursive_predict");
  if (steps < 1) throw ArgumentError("rollout: steps must be positive");

  std::vector<Tensor<T>> preds;
  std::vector<int> generated_counts;
  preds.reserve(steps);
  generated_counts.reserve(steps);

  std::deque<const Tensor<T>*> window;
  std::deque<bool> generated;
  for (const Tensor<T>& f : context) {
    window.push_back(&f);
    generated.push_back(false);
  }

  for (int j = 0; j < steps; ++j) {
    Tensor<T> stack = detail::stack_frames(window);
    generated_counts.push_back(
        static_cast<int>(std::count(generated.begin(), generated.end(), true)));
    preds.push_back(fn(j, stack));
    require_same_shape(preds.back(), context.front(), "recursive_predict step output");
    window.pop_front();
    generated.pop_front();
    window.push_back(&preds.back());
    generated.push_back(true);
  }
  return {std::move(preds), std::move(generated_counts)};
}

// `context` holds the delta seed frames in temporal order, each (B, C, H, W).
// When `with_caches` is false only predictions and alpha traces are kept.
template <typename T>
Rollout<T> rollout_forward(Model<T>& model, const std::vector<Tensor<T>>& context, int steps,
                           bool bn_train, bool bn_update_running, bool with_caches) {
  const TransformerConfig& tc = model.transformer.cfg;
  if (static_cast<int>(context.size()) != tc.delta)
    throw ArgumentError("rollout: expected " + std::to_string(tc.delta) + " context frames, got " +
                        std::to_string(context.size()));
  for (const Tensor<T>& f : context)
    if (f.c != tc.c || f.h != tc.h || f.w != tc.w)
      throw ArgumentError("rollout: context frame shape " + f.shape_str() +
                          " does not match model input");

  Rollout<T> ro;
  if (with_caches) ro.caches.resize(steps);
  ro.alpha_trace.reserve(steps);

  auto step_fn = [&](int j, const Tensor<T>& stack) {
    StepCache<T>* sc = with_caches ? &ro.caches[j] : nullptr;
    Tensor<T> alpha;
    if (model.use_selector()) {
      alpha = model.selector->forward(stack, bn_train, bn_update_running,
                                      sc ? &sc->scache : nullptr);
    } else {
      alpha = uniform_alpha_hat<T>(stack.b, tc.rows(), tc.n);
    }
    Tensor<T> pred = model.transformer.forward(stack, alpha, sc ? &sc->tcache : nullptr);
    if (sc) sc->alpha_hat = alpha;
    ro.alpha_trace.push_back(std::move(alpha));
    return pred;
  };
  auto [preds, counts] = recursive_predict(context, steps, step_fn);
  ro.preds = std::move(preds);
  ro.generated_in_conditioning = std::move(counts);
  return ro;
}

// Backpropagates `dpreds` (one gradient per generated frame) through the
// recursion, accumulating parameter gradients in both networks. When
// `stop_gradient` is set, generated frames are treated as constants when they
// re-enter the conditioning window (ablation switch).
template <typename T>
void rollout_backward(Model<T>& model, Rollout<T>& ro, const std::vector<Tensor<T>>& dpreds,
                      bool stop_gradient = false) {
  const TransformerConfig& tc = model.transformer.cfg;
  const int steps = static_cast<int>(ro.preds.size());
  if (static_cast<int>(ro.caches.size()) != steps)
    throw ArgumentError("rollout backward: forward pass was run without caches");
  if (static_cast<int>(dpreds.size()) != steps)
    throw ArgumentError("rollout backward: need one gradient per generated frame");

  // dgen[j] accumulates the gradient flowing into generated frame j from
  // later steps that conditioned on it.
  std::vector<Tensor<T>> dgen(steps);
  const size_t plane = static_cast<size_t>(tc.h) * tc.w;

  for (int j = steps - 1; j >= 0; --j) {
    Tensor<T> gpred = dpreds[j];
    if (dgen[j].size() > 0) gpred.add_scaled(dgen[j], T(1));

    auto [dstack, dalpha] = model.transformer.backward(gpred, ro.caches[j].tcache);
    if (model.use_selector()) {
      Tensor<T> ds = model.selector->backward(dalpha, ro.caches[j].scache);
      dstack.add_scaled(ds, T(1));
    }
    if (stop_gradient) continue;

    // conditioning slot p of step j holds timeline frame j + p; timeline
    // index i >= delta is generated frame i - delta
    for (int p = 0; p < tc.delta; ++p) {
      const int gen = j + p - tc.delta;
      if (gen < 0) continue;
      if (dgen[gen].size() == 0) dgen[gen] = Tensor<T>(dstack.b, tc.c, tc.h, tc.w);
      for (int bi = 0; bi < dstack.b; ++bi)
        for (int c = 0; c < tc.c; ++c) {
          const T* src = dstack.plane(bi, p * tc.c + c);
          T* dst = dgen[gen].plane(bi, c);
          for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
  }
}

}  // namespace motionsel
