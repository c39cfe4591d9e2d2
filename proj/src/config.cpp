#include "motionsel/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "motionsel/errors.hpp"

namespace motionsel {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct LineContext {
  const std::string& origin;
  int line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ArgumentError(origin + ":" + std::to_string(line) + ": " + msg);
  }
};

long long parse_integer(const LineContext& at, const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    at.fail("key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

int parse_int(const LineContext& at, const std::string& key, const std::string& value) {
  long long v = parse_integer(at, key, value);
  if (v < -(1LL << 31) || v >= (1LL << 31)) at.fail("key '" + key + "' value out of range");
  return static_cast<int>(v);
}

uint64_t parse_u64(const LineContext& at, const std::string& key, const std::string& value) {
  long long v = parse_integer(at, key, value);
  if (v < 0) at.fail("key '" + key + "' expects a non-negative integer");
  return static_cast<uint64_t>(v);
}

double parse_real(const LineContext& at, const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    at.fail("key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

bool parse_bool(const LineContext& at, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  at.fail("key '" + key + "' expects true/false, got '" + value + "'");
}

// "first..last", inclusive bounds.
std::pair<int, int> parse_range(const LineContext& at, const std::string& key,
                                const std::string& value) {
  size_t dots = value.find("..");
  if (dots == std::string::npos)
    at.fail("key '" + key + "' expects a range like 0..29, got '" + value + "'");
  int first = parse_int(at, key, trim(value.substr(0, dots)));
  int last = parse_int(at, key, trim(value.substr(dots + 2)));
  if (first < 0 || last < first) at.fail("key '" + key + "' range bounds out of order");
  return {first, last};
}

void check_variant(const LineContext& at, const std::string& v) {
  if (v != "B1" && v != "M1" && v != "M2")
    at.fail("unknown variant '" + v + "' (expected B1, M1 or M2)");
}

}  // namespace

SelectorConfig RunConfig::selector_config() const {
  SelectorConfig s;
  s.ndf = selector_ndf;
  s.fs = selector_fs;
  s.rows = model.half();
  s.n = model.n;
  s.delta = model.delta;
  s.c = model.c;
  s.h = model.h;
  s.w = model.w;
  if (selector_reduce_blocks >= 0) {
    s.reduce_blocks = selector_reduce_blocks;
  } else {
    Transformer<float> probe{model};
    s.reduce_blocks = default_reduce_blocks(s, probe.param_count());
  }
  return s;
}

Model<float> RunConfig::make_model() const {
  validate();
  std::optional<SelectorConfig> scfg;
  if (selector_enabled) scfg = selector_config();
  return Model<float>(model, scfg);
}

void RunConfig::validate() const {
  if (variant != "B1" && variant != "M1" && variant != "M2")
    throw ArgumentError("config: unknown variant '" + variant + "'");
  model.validate();
  train.validate();
  if (selector_enabled) {
    if (model.delta < 2)
      throw ArgumentError("config: selector needs delta >= 2 for temporal differences");
    selector_config().validate();
  }
  if (selector_reduce_blocks < -1)
    throw ArgumentError("config: selector reduce_blocks must be >= 0 (or omitted)");
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw, section;
  LineContext at{origin};

  while (std::getline(in, raw)) {
    ++at.line;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;

    if (line.front() == '[') {
      if (line.back() != ']') at.fail("unterminated section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "model" && section != "selector" && section != "train" &&
          section != "data")
        at.fail("unknown section [" + section + "]");
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) at.fail("missing key before '='");
    if (section.empty()) at.fail("key '" + key + "' appears before any [section] header");
    seen.insert(section + "." + key);

    if (section == "run") {
      if (key == "variant") {
        check_variant(at, value);
        cfg.variant = value;
      } else {
        at.fail("unknown key '" + key + "' in [run]");
      }
    } else if (section == "model") {
      if (key == "n") cfg.model.n = parse_int(at, key, value);
      else if (key == "l") cfg.model.l = parse_int(at, key, value);
      else if (key == "ft") cfg.model.ft = parse_int(at, key, value);
      else if (key == "delta") cfg.model.delta = parse_int(at, key, value);
      else if (key == "channels") cfg.model.c = parse_int(at, key, value);
      else if (key == "height") cfg.model.h = parse_int(at, key, value);
      else if (key == "width") cfg.model.w = parse_int(at, key, value);
      else at.fail("unknown key '" + key + "' in [model]");
    } else if (section == "selector") {
      if (key == "enabled") cfg.selector_enabled = parse_bool(at, key, value);
      else if (key == "ndf") cfg.selector_ndf = parse_int(at, key, value);
      else if (key == "fs") cfg.selector_fs = parse_int(at, key, value);
      else if (key == "reduce_blocks") cfg.selector_reduce_blocks = parse_int(at, key, value);
      else at.fail("unknown key '" + key + "' in [selector]");
    } else if (section == "train") {
      if (key == "lr0") cfg.train.lr0 = parse_real(at, key, value);
      else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_real(at, key, value);
      else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_real(at, key, value);
      else if (key == "adam_eps") cfg.train.adam_eps = parse_real(at, key, value);
      else if (key == "batch_size") cfg.train.batch_size = parse_int(at, key, value);
      else if (key == "iters_per_k") cfg.train.iters_per_k = parse_int(at, key, value);
      else if (key == "stage2_epochs_max") cfg.train.stage2_epochs_max = parse_int(at, key, value);
      else if (key == "early_stop_patience")
        cfg.train.early_stop_patience = parse_int(at, key, value);
      else if (key == "mu_motion") cfg.train.mu_motion = parse_real(at, key, value);
      else if (key == "seed") cfg.train.seed = parse_u64(at, key, value);
      else if (key == "t_train") cfg.train.t_train = parse_int(at, key, value);
      else if (key == "stop_gradient") cfg.train.stop_gradient = parse_bool(at, key, value);
      else if (key == "log_every") cfg.train.log_every = parse_int(at, key, value);
      else if (key == "checkpoint_every") cfg.train.checkpoint_every = parse_int(at, key, value);
      else at.fail("unknown key '" + key + "' in [train]");
    } else {  // data
      if (key == "clip") cfg.data.clip_pattern = value;
      else if (key == "train_range") cfg.data.train_range = parse_range(at, key, value);
      else if (key == "eval_range") cfg.data.eval_range = parse_range(at, key, value);
      else if (key == "out_dir") cfg.data.out_dir = value;
      else at.fail("unknown key '" + key + "' in [data]");
    }
  }

  // Preset fills only what the file left unset.
  bool mu_set = seen.count("train.mu_motion") > 0;
  bool sel_set = seen.count("selector.enabled") > 0;
  if (cfg.variant == "B1") {
    if (!sel_set) cfg.selector_enabled = false;
    if (!mu_set) cfg.train.mu_motion = 0;
  } else if (cfg.variant == "M1") {
    if (!sel_set) cfg.selector_enabled = true;
    if (!mu_set) cfg.train.mu_motion = 0;
  } else {
    if (!sel_set) cfg.selector_enabled = true;
    if (!mu_set) cfg.train.mu_motion = 10;
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str(), path);
}

}  // namespace motionsel
