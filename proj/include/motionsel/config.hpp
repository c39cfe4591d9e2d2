#pragma once

#include <optional>
#include <string>
#include <utility>

#include "motionsel/model.hpp"
#include "motionsel/trainer.hpp"

namespace motionsel {

struct DataConfig {
  std::string clip_pattern;
  std::optional<std::pair<int, int>> train_range;
  std::optional<std::pair<int, int>> eval_range;
  std::string out_dir = "out";
};

// One experiment description: network shape, selector settings, optimizer
// schedule and clip paths, plus a variant preset. B1 trains without the
// selector and without motion loss, M1 keeps the selector but drops the
// motion loss, M2 is the full model. Presets only fill in keys the file
// leaves unset; explicit keys always win.
struct RunConfig {
  std::string variant = "M2";
  TransformerConfig model;
  bool selector_enabled = true;
  int selector_ndf = 16;
  int selector_fs = 5;
  int selector_reduce_blocks = -1;  // -1: sized so the selector's capacity tracks the transformer's
  TrainConfig train;
  DataConfig data;

  SelectorConfig selector_config() const;
  Model<float> make_model() const;
  void validate() const;
};

// Line-oriented `key = value` text grouped under [run] / [model] / [selector]
// / [train] / [data] headers; '#' or ';' starts a comment line. Unknown
// sections or keys and malformed values are rejected with an
// "<origin>:<line>:" diagnostic naming the offender.
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);
RunConfig parse_run_config(const std::string& path);

}  // namespace motionsel
