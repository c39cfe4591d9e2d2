#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "motionsel/adam.hpp"
#include "motionsel/checkpoint.hpp"
#include "motionsel/losses.hpp"
#include "motionsel/rollout.hpp"
#include "motionsel/video_io.hpp"

namespace motionsel {

struct TrainConfig {
  double lr0 = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int iters_per_k = 1000;
  int stage2_epochs_max = 300;
  int early_stop_patience = 20;
  double mu_motion = 10.0;
  uint64_t seed = 1;
  int t_train = 0;  // 0 -> whole clip
  bool stop_gradient = false;
  int log_every = 50;
  int checkpoint_every = 500;
  std::string log_path;        // append-only CSV; empty disables
  std::string checkpoint_dir;  // empty disables periodic checkpoints

  void validate() const {
    if (lr0 <= 0) throw ArgumentError("train: lr0 must be positive");
    if (iters_per_k < 1) throw ArgumentError("train: iters_per_k must be >= 1");
    if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (stage2_epochs_max < 0) throw ArgumentError("train: stage2_epochs_max must be >= 0");
    if (early_stop_patience < 1) throw ArgumentError("train: early_stop_patience must be >= 1");
    if (t_train < 0) throw ArgumentError("train: t_train must be >= 0");
    if (log_every < 1 || checkpoint_every < 1)
      throw ArgumentError("train: logging/checkpoint cadence must be >= 1");
  }
};

struct TrainLogRecord {
  int64_t iteration = 0;
  int stage = 1;
  int k = 0;  // curriculum phase in stage 1, -1 in stage 2
  double lr = 0;
  double l1 = 0, motion = 0, total = 0;
  std::vector<int> active;  // active channels per selection row
};

// Called after every optimizer step with the step's record and, per rollout
// step, how many conditioning frames were model-generated.
using StepObserver = std::function<void(const TrainLogRecord&, const std::vector<int>&)>;

// Stage-1 objective on one sampled window: K+1 recursive predictions where
// generated frames replace their ground-truth counterparts in the
// conditioning set. K is capped at delta-1 in stage 1.
Rollout<float> rollout_training_window(Model<float>& model, const Window& window, int k,
                                       bool bn_train = true, bool bn_update_running = true,
                                       bool with_caches = false);

class Trainer {
 public:
  Trainer(Model<float>& model, const Clip& clip, const TrainConfig& cfg);

  // Stage 1 (incremental-K curriculum) followed by stage 2 (full-sequence
  // rollouts with early stopping).
  void run();
  void run_stage1();
  void run_stage2();

  void set_observer(StepObserver f) { observer_ = std::move(f); }

  int64_t iteration() const { return iter_; }
  const std::vector<TrainLogRecord>& records() const { return records_; }
  // (first, last) 50-iteration mean loss per completed stage-1 phase
  const std::vector<std::pair<double, double>>& phase_loss_means() const { return phase_means_; }
  Adam<float>& optimizer() { return adam_; }
  Model<float>& model() { return model_; }

  TrainState snapshot_state() const;
  void save(const std::string& path);
  // Restores optimizer/counters/rng from a loaded checkpoint; the model
  // weights themselves live in the Model passed to the constructor.
  void resume_from(const Adam<float>& adam, const TrainState& state);

 private:
  struct StepResult {
    LossBreakdown<float> loss;
    std::vector<int> active;
    std::vector<int> generated_counts;
  };

  StepResult optimize_batch(const std::vector<Tensor<float>>& context,
                            const std::vector<Tensor<float>>& targets, int steps, bool bn_train);
  void after_step(int stage, int k, const StepResult& res);
  void report_sparsity(int stage);
  int effective_t_train() const;

  Model<float>& model_;
  const Clip& clip_;
  TrainConfig cfg_;
  Adam<float> adam_;
  Rng rng_;
  int64_t iter_ = 0;
  double stage2_best_ = -1.0;
  int stage2_stall_ = 0;
  std::vector<TrainLogRecord> records_;
  std::vector<std::pair<double, double>> phase_means_;
  StepObserver observer_;
  std::ofstream csv_;
};

}  // namespace motionsel
