#include "motionsel/trainer.hpp"

#include <cmath>

#include "motionsel/log.hpp"

namespace motionsel {

namespace {

// Stacks frame `index` of every window into one batched (B, C, H, W) tensor.
TensorF batch_frame(const std::vector<Window>& windows, int index) {
  const TensorF& f0 = windows[0].frames[index];
  TensorF out(static_cast<int>(windows.size()), f0.c, f0.h, f0.w);
  for (size_t b = 0; b < windows.size(); ++b) {
    const TensorF& f = windows[b].frames[index];
    for (int c = 0; c < f.c; ++c)
      std::copy(f.plane(0, c), f.plane(0, c) + static_cast<size_t>(f.h) * f.w,
                out.plane(static_cast<int>(b), c));
  }
  return out;
}

}  // namespace

Rollout<float> rollout_training_window(Model<float>& model, const Window& window, int k,
                                       bool bn_train, bool bn_update_running, bool with_caches) {
  const int delta = model.transformer.cfg.delta;
  if (k < 0 || k >= delta)
    throw ArgumentError("stage-1 curriculum requires 0 <= K < delta, got K=" + std::to_string(k));
  if (static_cast<int>(window.frames.size()) != delta + k + 1)
    throw ArgumentError("training window needs delta+K+1 frames, got " +
                        std::to_string(window.frames.size()));
  std::vector<TensorF> context(window.frames.begin(), window.frames.begin() + delta);
  return rollout_forward(model, context, k + 1, bn_train, bn_update_running, with_caches);
}

Trainer::Trainer(Model<float>& model, const Clip& clip, const TrainConfig& cfg)
    : model_(model), clip_(clip), cfg_(cfg),
      adam_(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps), rng_(cfg.seed) {
  cfg_.validate();
  const TransformerConfig& tc = model_.transformer.cfg;
  if (clip_.length() < 2 * tc.delta)
    throw ArgumentError("training clip must hold at least 2*delta frames");
  if (clip_.channels() != tc.c || clip_.height() != tc.h || clip_.width() != tc.w)
    throw ArgumentError("training clip shape does not match model input");
  if (cfg_.t_train > clip_.length())
    throw ArgumentError("t_train exceeds clip length");
  if (!cfg_.log_path.empty()) {
    const bool fresh = !std::ifstream(cfg_.log_path).good();
    csv_.open(cfg_.log_path, std::ios::app);
    if (!csv_) throw IoError("cannot open training log: " + cfg_.log_path);
    if (fresh) {
      csv_ << "iteration,stage,K,lr,l1,motion,total";
      for (int r = 0; r < tc.rows(); ++r) csv_ << ",active_channels_row" << r;
      csv_ << "\n";
    }
  }
}

int Trainer::effective_t_train() const {
  return cfg_.t_train > 0 ? cfg_.t_train : clip_.length();
}

Trainer::StepResult Trainer::optimize_batch(const std::vector<TensorF>& context,
                                            const std::vector<TensorF>& targets, int steps,
                                            bool bn_train) {
  Rollout<float> ro =
      rollout_forward(model_, context, steps, bn_train, /*bn_update_running=*/bn_train,
                      /*with_caches=*/true);
  std::vector<TensorF> dpreds;
  LossConfig lcfg{cfg_.mu_motion};
  LossBreakdown<float> loss = sequence_loss(ro.preds, targets, lcfg, &dpreds);
  if (!std::isfinite(loss.total))
    throw DivergenceError("non-finite training loss at iteration " + std::to_string(iter_));
  model_.zero_grads();
  rollout_backward(model_, ro, dpreds, cfg_.stop_gradient);
  adam_.step(model_, lr_schedule(cfg_.lr0, iter_));
  StepResult res;
  res.loss = loss;
  res.active = active_channels(ro.alpha_trace.back());
  res.generated_counts = std::move(ro.generated_in_conditioning);
  return res;
}

void Trainer::after_step(int stage, int k, const StepResult& res) {
  TrainLogRecord rec;
  rec.iteration = iter_;
  rec.stage = stage;
  rec.k = k;
  rec.lr = lr_schedule(cfg_.lr0, iter_);
  rec.l1 = res.loss.l1;
  rec.motion = res.loss.motion;
  rec.total = res.loss.total;
  rec.active = res.active;
  if (iter_ % cfg_.log_every == 0) {
    records_.push_back(rec);
    if (csv_.is_open()) {
      csv_ << rec.iteration << "," << rec.stage << "," << rec.k << "," << rec.lr << ","
           << rec.l1 << "," << rec.motion << "," << rec.total;
      for (int a : rec.active) csv_ << "," << a;
      csv_ << "\n";
      csv_.flush();
    }
  }
  if (observer_) observer_(rec, res.generated_counts);
  ++iter_;
  if (!cfg_.checkpoint_dir.empty() && iter_ % cfg_.checkpoint_every == 0) {
    char name[64];
    std::snprintf(name, sizeof(name), "/ckpt_%06lld.bin", static_cast<long long>(iter_));
    save(cfg_.checkpoint_dir + name);
  }
}

void Trainer::report_sparsity(int stage) {
  if (!model_.use_selector()) return;
  const int n = model_.transformer.cfg.n;
  TensorF stack(1, model_.transformer.cfg.delta * clip_.channels(), clip_.height(),
                clip_.width());
  int ci = 0;
  for (int t = 0; t < model_.transformer.cfg.delta; ++t)
    for (int c = 0; c < clip_.channels(); ++c, ++ci)
      std::copy(clip_.frames[t].plane(0, c),
                clip_.frames[t].plane(0, c) + static_cast<size_t>(clip_.height()) * clip_.width(),
                stack.plane(0, ci));
  TensorF alpha = model_.selector->forward(stack, /*train=*/false, /*update_running=*/false);
  std::vector<int> active = active_channels(alpha);
  for (size_t r = 0; r < active.size(); ++r)
    if (active[r] * 10 < n)
      MSEL_WARN("stage %d: selection row %zu uses %d/%d channels (< 10%% active)", stage, r,
                active[r], n);
}

void Trainer::run_stage1() {
  const int delta = model_.transformer.cfg.delta;
  if (effective_t_train() < 2 * delta)
    throw ArgumentError("stage 1 needs a training segment of at least 2*delta frames");
  const int64_t total = static_cast<int64_t>(delta) * cfg_.iters_per_k;
  if (iter_ >= total) return;  // already past stage 1 (resume)

  int k0 = static_cast<int>(iter_ / cfg_.iters_per_k);
  int i0 = static_cast<int>(iter_ % cfg_.iters_per_k);
  for (int k = k0; k < delta; ++k) {
    std::vector<double> phase_losses;
    for (int i = (k == k0 ? i0 : 0); i < cfg_.iters_per_k; ++i) {
      std::vector<Window> batch;
      batch.reserve(cfg_.batch_size);
      for (int b = 0; b < cfg_.batch_size; ++b)
        batch.push_back(sample_window(clip_, delta, k, rng_, effective_t_train()));
      const bool flip = rng_.bernoulli(0.5);
      if (flip)
        for (Window& w : batch) w = flip_lr(w, true);

      std::vector<TensorF> context, targets;
      for (int p = 0; p < delta; ++p) context.push_back(batch_frame(batch, p));
      for (int t = 0; t <= k; ++t) targets.push_back(batch_frame(batch, delta + t));

      StepResult res = optimize_batch(context, targets, k + 1, /*bn_train=*/true);
      phase_losses.push_back(res.loss.total);
      after_step(1, k, res);
    }
    if (!phase_losses.empty()) {
      const size_t span = std::min<size_t>(50, phase_losses.size());
      double first = 0, last = 0;
      for (size_t i = 0; i < span; ++i) {
        first += phase_losses[i];
        last += phase_losses[phase_losses.size() - span + i];
      }
      first /= static_cast<double>(span);
      last /= static_cast<double>(span);
      phase_means_.emplace_back(first, last);
      if (last > first)
        MSEL_WARN("stage 1 phase K=%d: smoothed loss rose from %.6g to %.6g", k, first, last);
    }
  }
  report_sparsity(1);
}

void Trainer::run_stage2() {
  const int delta = model_.transformer.cfg.delta;
  const int t_train = effective_t_train();
  const int steps = t_train - delta;
  if (steps < 1) {
    MSEL_WARN("stage 2 skipped: t_train %d leaves no frames to predict", t_train);
    return;
  }
  const int64_t stage1_total = static_cast<int64_t>(delta) * cfg_.iters_per_k;

  std::vector<TensorF> context(clip_.frames.begin(), clip_.frames.begin() + delta);
  std::vector<TensorF> targets(clip_.frames.begin() + delta, clip_.frames.begin() + t_train);

  int done = static_cast<int>(std::max<int64_t>(0, iter_ - stage1_total));
  for (int e = done; e < cfg_.stage2_epochs_max; ++e) {
    StepResult res = optimize_batch(context, targets, steps, /*bn_train=*/false);
    after_step(2, -1, res);

    const double cur = res.loss.total;
    if (stage2_best_ < 0 || cur < stage2_best_ * (1.0 - 0.001)) {
      stage2_best_ = cur;
      stage2_stall_ = 0;
    } else if (++stage2_stall_ >= cfg_.early_stop_patience) {
      MSEL_INFO("stage 2 early stop after %d rollouts (best %.6g)", e + 1, stage2_best_);
      break;
    }
  }
  report_sparsity(2);
}

void Trainer::run() {
  run_stage1();
  run_stage2();
  if (!cfg_.checkpoint_dir.empty()) save(cfg_.checkpoint_dir + "/final.bin");
}

TrainState Trainer::snapshot_state() const {
  TrainState s;
  s.iteration = iter_;
  s.stage = iter_ < static_cast<int64_t>(model_.transformer.cfg.delta) * cfg_.iters_per_k ? 1 : 2;
  s.adam_steps = adam_.steps_taken();
  s.rng_state = rng_.save_state();
  s.stage2_best = stage2_best_;
  s.stage2_stall = stage2_stall_;
  return s;
}

void Trainer::save(const std::string& path) {
  TrainState s = snapshot_state();
  save_checkpoint(path, model_, &adam_, s);
}

void Trainer::resume_from(const Adam<float>& adam, const TrainState& state) {
  adam_ = adam;
  iter_ = state.iteration;
  stage2_best_ = state.stage2_best;
  stage2_stall_ = state.stage2_stall;
  if (!state.rng_state.empty()) rng_.load_state(state.rng_state);
}

}  // namespace motionsel
