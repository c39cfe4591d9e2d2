#pragma once

#include <string>
#include <vector>

#include "motionsel/layers.hpp"
#include "motionsel/params.hpp"

// The selection network: consumes absolute temporal differences of the
// conditioning window and emits a row-stochastic matrix of channel weights,
// one row per decoder merge point.

namespace motionsel {

struct SelectorConfig {
  int ndf = 16;        // first-layer channel count
  int fs = 5;          // spatial filter size
  int rows = 4;        // L/2
  int n = 16;          // columns (transformer channel count)
  int delta = 3;
  int c = 1;
  int h = 64;
  int w = 64;
  int reduce_blocks = 0;  // stride-1 channel-halving blocks before the dense layer

  void validate() const {
    if (rows < 1 || n < 1 || ndf < 1) throw ArgumentError("selector: rows, N, ndf must be >= 1");
    if (delta < 2) throw ArgumentError("selector: needs delta >= 2 for temporal differences");
    if (reduce_blocks < 0) throw ArgumentError("selector: reduce_blocks must be >= 0");
  }

  int stride2_in_channels(int i) const {
    return i == 0 ? (delta - 1) * c : ndf * (1 << (i - 1));
  }
  int stride2_out_channels(int i) const { return ndf * (1 << i); }

  int reduce_in_channels(int j) const {
    int ch = stride2_out_channels(rows - 1);
    for (int k = 0; k < j; ++k) ch = std::max(1, ch / 2);
    return ch;
  }
  int reduce_out_channels(int j) const { return std::max(1, reduce_in_channels(j) / 2); }

  // Spatial size after the stride-2 stack (stride-1 blocks preserve it).
  std::pair<int, int> head_dims() const {
    int bh = h, bw = w;
    for (int i = 0; i < rows; ++i) {
      bh = conv_out_size(bh, 2);
      bw = conv_out_size(bw, 2);
    }
    return {bh, bw};
  }

  int flat_dim() const {
    auto [bh, bw] = head_dims();
    int ch = reduce_blocks == 0 ? stride2_out_channels(rows - 1) : reduce_out_channels(reduce_blocks - 1);
    return bh * bw * ch;
  }
};

// Capacity rule: add stride-1 reduction blocks until the dense layer's input
// is within 4x the transformer's parameter budget, keeping the two networks
// at a comparable size.
inline int default_reduce_blocks(SelectorConfig cfg, size_t transformer_params) {
  for (int rb = 0;; ++rb) {
    cfg.reduce_blocks = rb;
    if (static_cast<size_t>(cfg.flat_dim()) <= 4 * transformer_params) return rb;
    if (cfg.reduce_out_channels(rb) <= 1) return rb + 1;
  }
}

template <typename T>
struct SelectorCache {
  Tensor<T> stack;                    // conditioning window (for the abs backward)
  Tensor<T> diff;                     // frontend output
  std::vector<Tensor<T>> pre;        // block inputs before their leading relu
  std::vector<ConvCache<T>> conv;    // stride-2 then stride-1 blocks, in order
  std::vector<NormCache<T>> norm;
  DenseCache<T> dense;
  Tensor<T> alpha;                    // softmax output
  int head_c = 0, head_h = 0, head_w = 0;
};

template <typename T>
struct Selector {
  SelectorConfig cfg;
  std::vector<Param<T>> conv_w, conv_b;          // stride-2 blocks
  std::vector<Param<T>> bn_gamma, bn_beta;       // blocks 1..rows-1
  std::vector<Tensor<T>> bn_rmean, bn_rvar;
  std::vector<Param<T>> red_w, red_b;            // stride-1 blocks
  std::vector<Param<T>> red_gamma, red_beta;
  std::vector<Tensor<T>> red_rmean, red_rvar;
  Param<T> dense_w, dense_b;

  static constexpr T kBnMomentum = T(0.9);
  static constexpr T kBnEps = T(1e-5);

  explicit Selector(const SelectorConfig& config) : cfg(config) {
    cfg.validate();
    for (int i = 0; i < cfg.rows; ++i) {
      conv_w.emplace_back(cfg.stride2_out_channels(i), cfg.stride2_in_channels(i), cfg.fs, cfg.fs);
      conv_b.emplace_back(1, cfg.stride2_out_channels(i), 1, 1);
      if (i >= 1) {
        int ch = cfg.stride2_out_channels(i);
        bn_gamma.emplace_back(1, ch, 1, 1);
        bn_beta.emplace_back(1, ch, 1, 1);
        bn_rmean.emplace_back(1, ch, 1, 1);
        bn_rvar.emplace_back(1, ch, 1, 1);
      }
    }
    for (int j = 0; j < cfg.reduce_blocks; ++j) {
      int cin = cfg.reduce_in_channels(j), cout = cfg.reduce_out_channels(j);
      red_w.emplace_back(cout, cin, cfg.fs, cfg.fs);
      red_b.emplace_back(1, cout, 1, 1);
      red_gamma.emplace_back(1, cout, 1, 1);
      red_beta.emplace_back(1, cout, 1, 1);
      red_rmean.emplace_back(1, cout, 1, 1);
      red_rvar.emplace_back(1, cout, 1, 1);
    }
    dense_w = Param<T>(cfg.rows * cfg.n, cfg.flat_dim(), 1, 1);
    dense_b = Param<T>(1, cfg.rows * cfg.n, 1, 1);
    reset_norm_state();
  }

  void init(Rng& rng, double stddev = 0.02) {
    for (auto& p : conv_w) p.init_gaussian(rng, stddev);
    for (auto& p : red_w) p.init_gaussian(rng, stddev);
    dense_w.init_gaussian(rng, stddev);
    for (auto& p : conv_b) p.init_const(T(0));
    for (auto& p : red_b) p.init_const(T(0));
    dense_b.init_const(T(0));
    reset_norm_state();
  }

  void visit_params(const ParamVisitor<T>& f) {
    for (int i = 0; i < cfg.rows; ++i) {
      std::string base = "selector.conv." + std::to_string(i);
      f(base + ".weight", conv_w[i].value, conv_w[i].grad);
      f(base + ".bias", conv_b[i].value, conv_b[i].grad);
      if (i >= 1) {
        f(base + ".norm_scale", bn_gamma[i - 1].value, bn_gamma[i - 1].grad);
        f(base + ".norm_shift", bn_beta[i - 1].value, bn_beta[i - 1].grad);
      }
    }
    for (int j = 0; j < cfg.reduce_blocks; ++j) {
      std::string base = "selector.reduce." + std::to_string(j);
      f(base + ".weight", red_w[j].value, red_w[j].grad);
      f(base + ".bias", red_b[j].value, red_b[j].grad);
      f(base + ".norm_scale", red_gamma[j].value, red_gamma[j].grad);
      f(base + ".norm_shift", red_beta[j].value, red_beta[j].grad);
    }
    f("selector.dense.weight", dense_w.value, dense_w.grad);
    f("selector.dense.bias", dense_b.value, dense_b.grad);
  }

  // Running statistics: saved with checkpoints but not learnable.
  void visit_state(const StateVisitor<T>& f) {
    for (size_t i = 0; i < bn_rmean.size(); ++i) {
      std::string base = "selector.conv." + std::to_string(i + 1);
      f(base + ".running_mean", bn_rmean[i]);
      f(base + ".running_var", bn_rvar[i]);
    }
    for (size_t j = 0; j < red_rmean.size(); ++j) {
      std::string base = "selector.reduce." + std::to_string(j);
      f(base + ".running_mean", red_rmean[j]);
      f(base + ".running_var", red_rvar[j]);
    }
  }

  void zero_grads() {
    visit_params([](const std::string&, Tensor<T>&, Tensor<T>& g) { g.fill(T(0)); });
  }

  size_t param_count() {
    size_t n = 0;
    visit_params([&](const std::string&, Tensor<T>& v, Tensor<T>&) { n += v.size(); });
    return n;
  }

  // Absolute temporal differences of consecutive frames, channel-stacked.
  Tensor<T> diff_frontend(const Tensor<T>& stack) const {
    if (stack.c != cfg.delta * cfg.c || stack.h != cfg.h || stack.w != cfg.w)
      throw ArgumentError("selector: window shape " + stack.shape_str() + " does not match config");
    Tensor<T> diff(stack.b, (cfg.delta - 1) * cfg.c, cfg.h, cfg.w);
    int m = cfg.h * cfg.w;
    for (int bi = 0; bi < stack.b; ++bi)
      for (int i = 0; i < cfg.delta - 1; ++i)
        for (int ch = 0; ch < cfg.c; ++ch) {
          const T* a = stack.plane(bi, i * cfg.c + ch);
          const T* b = stack.plane(bi, (i + 1) * cfg.c + ch);
          T* d = diff.plane(bi, i * cfg.c + ch);
          for (int p = 0; p < m; ++p) d[p] = std::abs(b[p] - a[p]);
        }
    return diff;
  }

  Tensor<T> forward(const Tensor<T>& stack, bool train, bool update_running,
                    SelectorCache<T>* cache = nullptr) {
    Tensor<T> cur = diff_frontend(stack);
    if (cache) {
      cache->stack = stack;
      cache->diff = cur;
      int blocks = cfg.rows + cfg.reduce_blocks;
      cache->pre.resize(blocks);
      cache->conv.resize(blocks);
      cache->norm.resize(blocks);
    }
    for (int i = 0; i < cfg.rows; ++i) {
      ConvCache<T>* cc = cache ? &cache->conv[i] : nullptr;
      if (i == 0) {
        cur = conv2d_same(cur, conv_w[0].value, conv_b[0].value, 2, cc);
      } else {
        if (cache) cache->pre[i] = cur;
        Tensor<T> a = relu_forward(cur);
        Tensor<T> z = conv2d_same(a, conv_w[i].value, conv_b[i].value, 2, cc);
        NormCache<T>* nc = cache ? &cache->norm[i] : nullptr;
        cur = batch_norm_forward(z, bn_gamma[i - 1].value, bn_beta[i - 1].value, bn_rmean[i - 1],
                                 bn_rvar[i - 1], train, update_running, kBnMomentum, kBnEps, nc);
      }
    }
    for (int j = 0; j < cfg.reduce_blocks; ++j) {
      int slot = cfg.rows + j;
      if (cache) cache->pre[slot] = cur;
      Tensor<T> a = relu_forward(cur);
      ConvCache<T>* cc = cache ? &cache->conv[slot] : nullptr;
      Tensor<T> z = conv2d_same(a, red_w[j].value, red_b[j].value, 1, cc);
      NormCache<T>* nc = cache ? &cache->norm[slot] : nullptr;
      cur = batch_norm_forward(z, red_gamma[j].value, red_beta[j].value, red_rmean[j],
                               red_rvar[j], train, update_running, kBnMomentum, kBnEps, nc);
    }
    if (cache) {
      cache->head_c = cur.c;
      cache->head_h = cur.h;
      cache->head_w = cur.w;
    }
    Tensor<T> flat = flatten(cur);
    Tensor<T> logits = dense_forward(flat, dense_w.value, dense_b.value,
                                     cache ? &cache->dense : nullptr);
    Tensor<T> resh = unflatten(logits, 1, cfg.rows, cfg.n);
    Tensor<T> alpha = row_softmax_forward(resh);
    if (cache) cache->alpha = alpha;
    return alpha;
  }

  // Accumulates parameter gradients; returns the gradient with respect to the
  // stacked conditioning window (gradients reach both frames of each
  // difference pair through the abs subgradient).
  Tensor<T> backward(const Tensor<T>& dalpha, SelectorCache<T>& c) {
    Tensor<T> g = row_softmax_backward(dalpha, c.alpha);
    Tensor<T> gflat = flatten(g);
    Tensor<T> gdense = dense_backward(gflat, dense_w.value, c.dense, dense_w.grad, dense_b.grad);
    Tensor<T> cur = unflatten(gdense, c.head_c, c.head_h, c.head_w);

    for (int j = cfg.reduce_blocks - 1; j >= 0; --j) {
      int slot = cfg.rows + j;
      Tensor<T> gz = batch_norm_backward(cur, red_gamma[j].value, c.norm[slot], red_gamma[j].grad,
                                         red_beta[j].grad);
      Tensor<T> ga = conv2d_backward(gz, red_w[j].value, c.conv[slot], red_w[j].grad,
                                     red_b[j].grad);
      cur = relu_backward(ga, c.pre[slot]);
    }
    for (int i = cfg.rows - 1; i >= 0; --i) {
      if (i == 0) {
        cur = conv2d_backward(cur, conv_w[0].value, c.conv[0], conv_w[0].grad, conv_b[0].grad);
      } else {
        Tensor<T> gz = batch_norm_backward(cur, bn_gamma[i - 1].value, c.norm[i],
                                           bn_gamma[i - 1].grad, bn_beta[i - 1].grad);
        Tensor<T> ga = conv2d_backward(gz, conv_w[i].value, c.conv[i], conv_w[i].grad,
                                       conv_b[i].grad);
        cur = relu_backward(ga, c.pre[i]);
      }
    }

    // abs backward: d|b - a| = sign(b - a) routed +g to the later frame,
    // -g to the earlier one; flat spots at zero difference get no gradient.
    Tensor<T> dstack(c.stack.b, c.stack.c, c.stack.h, c.stack.w);
    dstack.fill(T(0));
    int m = cfg.h * cfg.w;
    for (int bi = 0; bi < c.stack.b; ++bi)
      for (int i = 0; i < cfg.delta - 1; ++i)
        for (int ch = 0; ch < cfg.c; ++ch) {
          const T* a = c.stack.plane(bi, i * cfg.c + ch);
          const T* b = c.stack.plane(bi, (i + 1) * cfg.c + ch);
          const T* gd = cur.plane(bi, i * cfg.c + ch);
          T* da = dstack.plane(bi, i * cfg.c + ch);
          T* db = dstack.plane(bi, (i + 1) * cfg.c + ch);
          for (int p = 0; p < m; ++p) {
            T s = b[p] > a[p] ? T(1) : (b[p] < a[p] ? T(-1) : T(0));
            db[p] += s * gd[p];
            da[p] -= s * gd[p];
          }
        }
    return dstack;
  }

 private:
  void reset_norm_state() {
    for (auto& p : bn_gamma) p.init_const(T(1));
    for (auto& p : red_gamma) p.init_const(T(1));
    for (auto& p : bn_beta) p.init_const(T(0));
    for (auto& p : red_beta) p.init_const(T(0));
    for (auto& t : bn_rmean) t.fill(T(0));
    for (auto& t : red_rmean) t.fill(T(0));
    for (auto& t : bn_rvar) t.fill(T(1));
    for (auto& t : red_rvar) t.fill(T(1));
  }
};

// Channels whose SCALED weight n * alpha_hat exceeds the threshold, counted
// per row for one batch item.
template <typename T>
std::vector<int> active_channels(const Tensor<T>& alpha_hat, T threshold = T(0.5), int bi = 0) {
  std::vector<int> counts(alpha_hat.h, 0);
  for (int r = 0; r < alpha_hat.h; ++r)
    for (int n = 0; n < alpha_hat.w; ++n)
      if (T(alpha_hat.w) * alpha_hat.at(bi, 0, r, n) > threshold) ++counts[r];
  return counts;
}

}  // namespace motionsel
