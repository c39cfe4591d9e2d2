#include "motionsel/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>

namespace motionsel {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'E', 'L', 'C', 'K', 'P', 'T'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_raw(std::FILE* f, const T* p, size_t n, const std::string& path) {
  if (std::fwrite(p, sizeof(T), n, f) != n) throw IoError("write failed: " + path);
}

template <typename T>
void read_raw(std::FILE* f, T* p, size_t n, const std::string& path) {
  if (std::fread(p, sizeof(T), n, f) != n)
    throw FormatError("truncated checkpoint: " + path);
}

void put_u16(std::FILE* f, uint16_t v, const std::string& p) { write_raw(f, &v, 1, p); }
void put_u32(std::FILE* f, uint32_t v, const std::string& p) { write_raw(f, &v, 1, p); }
void put_u64(std::FILE* f, uint64_t v, const std::string& p) { write_raw(f, &v, 1, p); }

uint16_t get_u16(std::FILE* f, const std::string& p) { uint16_t v; read_raw(f, &v, 1, p); return v; }
uint32_t get_u32(std::FILE* f, const std::string& p) { uint32_t v; read_raw(f, &v, 1, p); return v; }
uint64_t get_u64(std::FILE* f, const std::string& p) { uint64_t v; read_raw(f, &v, 1, p); return v; }

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int64_t parse_int(const std::map<std::string, std::string>& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw FormatError("checkpoint config missing key: " + key);
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint config key " + key + " is not an integer: " + it->second);
  }
}

double parse_real(const std::map<std::string, std::string>& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw FormatError("checkpoint config missing key: " + key);
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint config key " + key + " is not a number: " + it->second);
  }
}

}  // namespace

void write_checkpoint_file(const std::string& path, const CheckpointData& data) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open for writing: " + path);

  write_raw(f.get(), kMagic, sizeof(kMagic), path);
  put_u32(f.get(), data.version, path);

  std::string cfg_text;
  for (const auto& [k, v] : data.config) cfg_text += k + "=" + v + "\n";
  put_u32(f.get(), static_cast<uint32_t>(cfg_text.size()), path);
  write_raw(f.get(), cfg_text.data(), cfg_text.size(), path);

  put_u32(f.get(), static_cast<uint32_t>(data.arrays.size()), path);
  for (const auto& [name, t] : data.arrays) {
    if (name.size() > 0xffff) throw ArgumentError("array name too long: " + name);
    put_u16(f.get(), static_cast<uint16_t>(name.size()), path);
    write_raw(f.get(), name.data(), name.size(), path);
    const uint8_t ndims = 4;
    write_raw(f.get(), &ndims, 1, path);
    const uint32_t dims[4] = {static_cast<uint32_t>(t.b), static_cast<uint32_t>(t.c),
                              static_cast<uint32_t>(t.h), static_cast<uint32_t>(t.w)};
    write_raw(f.get(), dims, 4, path);
    put_u64(f.get(), static_cast<uint64_t>(t.size()), path);
    write_raw(f.get(), t.data.data(), t.size(), path);
  }
  if (std::fflush(f.get()) != 0) throw IoError("write failed: " + path);
}

CheckpointData read_checkpoint_file(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw NotFoundError("no such checkpoint: " + path);

  char magic[8];
  read_raw(f.get(), magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint file: " + path);

  CheckpointData data;
  data.version = get_u32(f.get(), path);
  if (data.version > kCheckpointVersion)
    throw IncompatibleError("checkpoint " + path + " has format version " +
                            std::to_string(data.version) + "; this build reads up to " +
                            std::to_string(kCheckpointVersion));

  const uint32_t cfg_len = get_u32(f.get(), path);
  std::string cfg_text(cfg_len, '\0');
  read_raw(f.get(), cfg_text.data(), cfg_len, path);
  std::istringstream lines(cfg_text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("malformed checkpoint config line: " + line);
    data.config[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const uint32_t count = get_u32(f.get(), path);
  data.arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = get_u16(f.get(), path);
    std::string name(name_len, '\0');
    read_raw(f.get(), name.data(), name_len, path);
    uint8_t ndims;
    read_raw(f.get(), &ndims, 1, path);
    if (ndims != 4) throw FormatError("unexpected array rank in checkpoint: " + path);
    uint32_t dims[4];
    read_raw(f.get(), dims, 4, path);
    const uint64_t n = get_u64(f.get(), path);
    const uint64_t expect = static_cast<uint64_t>(dims[0]) * dims[1] * dims[2] * dims[3];
    if (n != expect) throw FormatError("array size disagrees with dims in checkpoint: " + path);
    TensorF t(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
              static_cast<int>(dims[3]));
    read_raw(f.get(), t.data.data(), t.size(), path);
    data.arrays.emplace_back(std::move(name), std::move(t));
  }
  // anything after the last array means the writer and reader disagree
  char extra;
  if (std::fread(&extra, 1, 1, f.get()) != 0)
    throw FormatError("trailing bytes after checkpoint payload: " + path);
  return data;
}

void save_checkpoint(const std::string& path, Model<float>& model, Adam<float>* adam,
                     const TrainState& state) {
  CheckpointData data;
  const TransformerConfig& tc = model.transformer.cfg;
  auto& cfg = data.config;
  cfg["model.n"] = std::to_string(tc.n);
  cfg["model.l"] = std::to_string(tc.l);
  cfg["model.ft"] = std::to_string(tc.ft);
  cfg["model.delta"] = std::to_string(tc.delta);
  cfg["model.c"] = std::to_string(tc.c);
  cfg["model.h"] = std::to_string(tc.h);
  cfg["model.w"] = std::to_string(tc.w);
  cfg["selector.enabled"] = model.use_selector() ? "1" : "0";
  if (model.use_selector()) {
    const SelectorConfig& sc = model.selector->cfg;
    cfg["selector.ndf"] = std::to_string(sc.ndf);
    cfg["selector.fs"] = std::to_string(sc.fs);
    cfg["selector.reduce_blocks"] = std::to_string(sc.reduce_blocks);
  }
  cfg["train.iteration"] = std::to_string(state.iteration);
  cfg["train.stage"] = std::to_string(state.stage);
  cfg["train.adam_steps"] = std::to_string(state.adam_steps);
  cfg["train.rng"] = state.rng_state;
  cfg["train.stage2_best"] = format_real(state.stage2_best);
  cfg["train.stage2_stall"] = std::to_string(state.stage2_stall);
  if (adam) {
    cfg["adam.beta1"] = format_real(adam->beta1());
    cfg["adam.beta2"] = format_real(adam->beta2());
    cfg["adam.eps"] = format_real(adam->eps());
  }

  model.visit_params([&](const std::string& name, TensorF& value, TensorF&) {
    data.arrays.emplace_back(name, value);
  });
  model.visit_state([&](const std::string& name, TensorF& value) {
    data.arrays.emplace_back(name, value);
  });
  if (adam)
    adam->visit_moments([&](const std::string& name, TensorF& t) {
      data.arrays.emplace_back(name, t);
    });

  write_checkpoint_file(path, data);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  CheckpointData data = read_checkpoint_file(path);
  const auto& cfg = data.config;

  TransformerConfig tc;
  tc.n = static_cast<int>(parse_int(cfg, "model.n"));
  tc.l = static_cast<int>(parse_int(cfg, "model.l"));
  tc.ft = static_cast<int>(parse_int(cfg, "model.ft"));
  tc.delta = static_cast<int>(parse_int(cfg, "model.delta"));
  tc.c = static_cast<int>(parse_int(cfg, "model.c"));
  tc.h = static_cast<int>(parse_int(cfg, "model.h"));
  tc.w = static_cast<int>(parse_int(cfg, "model.w"));

  std::optional<SelectorConfig> sc;
  if (parse_int(cfg, "selector.enabled") != 0) {
    SelectorConfig s;
    s.ndf = static_cast<int>(parse_int(cfg, "selector.ndf"));
    s.fs = static_cast<int>(parse_int(cfg, "selector.fs"));
    s.reduce_blocks = static_cast<int>(parse_int(cfg, "selector.reduce_blocks"));
    s.rows = tc.rows();
    s.n = tc.n;
    s.delta = tc.delta;
    s.c = tc.c;
    s.h = tc.h;
    s.w = tc.w;
    sc = s;
  }

  double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (cfg.count("adam.beta1")) b1 = parse_real(cfg, "adam.beta1");
  if (cfg.count("adam.beta2")) b2 = parse_real(cfg, "adam.beta2");
  if (cfg.count("adam.eps")) eps = parse_real(cfg, "adam.eps");

  LoadedCheckpoint out{Model<float>(tc, sc), Adam<float>(b1, b2, eps), TrainState{}};
  out.state.iteration = parse_int(cfg, "train.iteration");
  out.state.stage = static_cast<int>(parse_int(cfg, "train.stage"));
  out.state.adam_steps = parse_int(cfg, "train.adam_steps");
  out.state.rng_state = cfg.count("train.rng") ? cfg.at("train.rng") : "";
  out.state.stage2_best = parse_real(cfg, "train.stage2_best");
  out.state.stage2_stall = static_cast<int>(parse_int(cfg, "train.stage2_stall"));
  out.adam.set_steps_taken(out.state.adam_steps);

  std::map<std::string, TensorF*> want;
  out.model.visit_params([&](const std::string& name, TensorF& value, TensorF&) {
    want[name] = &value;
  });
  out.model.visit_state([&](const std::string& name, TensorF& value) { want[name] = &value; });

  for (auto& [name, t] : data.arrays) {
    if (name.rfind("adam.", 0) == 0) {
      out.adam.restore_moment(name, t);
      continue;
    }
    auto it = want.find(name);
    if (it == want.end())
      throw IncompatibleError("checkpoint array " + name + " has no slot in this model");
    if (!it->second->same_shape(t))
      throw IncompatibleError("checkpoint array " + name + " has shape " + t.shape_str() +
                              ", model expects " + it->second->shape_str());
    *it->second = std::move(t);
    want.erase(it);
  }
  if (!want.empty())
    throw IncompatibleError("checkpoint is missing array " + want.begin()->first);
  return out;
}

}  // namespace motionsel
