#pragma once

#include <string>
#include <utility>
#include <vector>

#include "motionsel/layers.hpp"
#include "motionsel/log.hpp"
#include "motionsel/params.hpp"

// The transformation network: a fully convolutional encoder-decoder with skip
// connections. Each decoder block consumes the concatenation of its skip
// partner and the previous decoder output scaled per channel by a row of the
// selection weights.

namespace motionsel {

struct TransformerConfig {
  int n = 16;      // channels per hidden layer
  int l = 8;       // hidden layer count (even)
  int ft = 4;      // spatial filter size
  int delta = 3;   // conditioning frames
  int c = 1;       // color channels
  int h = 64;
  int w = 64;

  int half() const { return l / 2; }
  int rows() const { return l / 2; }

  void validate() const {
    if (l < 4 || l % 2 != 0) throw ArgumentError("transformer: L must be even and >= 4");
    if (n < 1) throw ArgumentError("transformer: N must be >= 1");
    if (delta < 1 || c < 1) throw ArgumentError("transformer: delta and C must be >= 1");
    int bh = h, bw = w;
    for (int i = 0; i < half(); ++i) {
      bh = conv_out_size(bh, 2);
      bw = conv_out_size(bw, 2);
    }
    if (bh < 1 || bw < 1) throw ArgumentError("transformer: bottleneck collapses below 1 pixel");
    if (bh < 3 || bh > 7 || bw < 3 || bw > 7)
      MSEL_WARN("bottleneck %dx%d is outside the recommended 3..7 pixel range", bh, bw);
  }
};

enum class DecomposeMode { kFull, kForeground, kBackground };

// Encoder activations, level 0 being the channel-stacked input window and
// level k the k-th stride-2 convolution output.
template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> levels;
};

template <typename T>
struct TransformerCache {
  FeaturePyramid<T> pyramid;
  std::vector<ConvCache<T>> enc_conv;
  std::vector<NormCache<T>> enc_norm;
  std::vector<Tensor<T>> concat_pre;   // decoder block inputs before the relu
  std::vector<DeconvCache<T>> dec_conv;
  std::vector<NormCache<T>> dec_norm;
  std::vector<Tensor<T>> block_pre;    // decoder block pre-activations
  std::vector<Tensor<T>> block_out;    // decoder block outputs
  Tensor<T> alpha_scaled;              // (b, 1, rows, n)
};

// Final-block pre-activation split for the fg/bg analysis: the full
// pre-activation equals skip_part + modulated_part + bias up to rounding.
template <typename T>
struct DecompositionProbe {
  Tensor<T> skip_part;       // contributions through the skip channels
  Tensor<T> modulated_part;  // contributions through the selector-scaled channels
  Tensor<T> bias;            // final-block bias, broadcast shape (1, c, 1, 1)
  Tensor<T> full_pre;        // pre-activation from the forward pass itself
};

template <typename T>
struct Transformer {
  TransformerConfig cfg;
  std::vector<Param<T>> enc_w, enc_b;         // half() entries
  std::vector<Param<T>> enc_gamma, enc_beta;  // blocks 1..half()-1
  std::vector<Param<T>> dec_w, dec_b;         // half() entries
  std::vector<Param<T>> dec_gamma, dec_beta;  // blocks 0..half()-2

  explicit Transformer(const TransformerConfig& config) : cfg(config) {
    cfg.validate();
    int hf = cfg.half();
    for (int k = 0; k < hf; ++k) {
      int cin = k == 0 ? cfg.delta * cfg.c : cfg.n;
      enc_w.emplace_back(cfg.n, cin, cfg.ft, cfg.ft);
      enc_b.emplace_back(1, cfg.n, 1, 1);
      if (k >= 1) {
        enc_gamma.emplace_back(1, cfg.n, 1, 1);
        enc_beta.emplace_back(1, cfg.n, 1, 1);
      }
    }
    for (int d = 0; d < hf; ++d) {
      int cout = d == hf - 1 ? cfg.c : cfg.n;
      dec_w.emplace_back(2 * cfg.n, cout, cfg.ft, cfg.ft);
      dec_b.emplace_back(1, cout, 1, 1);
      if (d < hf - 1) {
        dec_gamma.emplace_back(1, cfg.n, 1, 1);
        dec_beta.emplace_back(1, cfg.n, 1, 1);
      }
    }
    reset_norm_affine();
  }

  void init(Rng& rng, double stddev = 0.02) {
    for (auto& p : enc_w) p.init_gaussian(rng, stddev);
    for (auto& p : dec_w) p.init_gaussian(rng, stddev);
    for (auto& p : enc_b) p.init_const(T(0));
    for (auto& p : dec_b) p.init_const(T(0));
    reset_norm_affine();
  }

  void visit_params(const ParamVisitor<T>& f) {
    int hf = cfg.half();
    for (int k = 0; k < hf; ++k) {
      std::string base = "transformer.encoder." + std::to_string(k);
      f(base + ".weight", enc_w[k].value, enc_w[k].grad);
      f(base + ".bias", enc_b[k].value, enc_b[k].grad);
      if (k >= 1) {
        f(base + ".norm_scale", enc_gamma[k - 1].value, enc_gamma[k - 1].grad);
        f(base + ".norm_shift", enc_beta[k - 1].value, enc_beta[k - 1].grad);
      }
    }
    for (int d = 0; d < hf; ++d) {
      std::string base = "transformer.decoder." + std::to_string(d);
      f(base + ".weight", dec_w[d].value, dec_w[d].grad);
      f(base + ".bias", dec_b[d].value, dec_b[d].grad);
      if (d < hf - 1) {
        f(base + ".norm_scale", dec_gamma[d].value, dec_gamma[d].grad);
        f(base + ".norm_shift", dec_beta[d].value, dec_beta[d].grad);
      }
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

  // stack is the channel-stacked window (b, delta*c, h, w).
  FeaturePyramid<T> encode(const Tensor<T>& stack, TransformerCache<T>* cache) const {
    if (stack.c != cfg.delta * cfg.c || stack.h != cfg.h || stack.w != cfg.w)
      throw ArgumentError("transformer encode: window shape " + stack.shape_str() +
                          " does not match config");
    int hf = cfg.half();
    FeaturePyramid<T> pyr;
    pyr.levels.push_back(stack);
    if (cache) {
      cache->enc_conv.resize(hf);
      cache->enc_norm.resize(hf);
    }
    for (int k = 0; k < hf; ++k) {
      const Tensor<T>& prev = pyr.levels.back();
      ConvCache<T>* cc = cache ? &cache->enc_conv[k] : nullptr;
      if (k == 0) {
        pyr.levels.push_back(conv2d_same(prev, enc_w[0].value, enc_b[0].value, 2, cc));
      } else {
        Tensor<T> a = relu_forward(prev);
        Tensor<T> z = conv2d_same(a, enc_w[k].value, enc_b[k].value, 2, cc);
        NormCache<T>* nc = cache ? &cache->enc_norm[k] : nullptr;
        pyr.levels.push_back(instance_norm_forward(z, enc_gamma[k - 1].value,
                                                   enc_beta[k - 1].value, T(1e-5), nc));
      }
    }
    if (cache) cache->pyramid = pyr;
    return pyr;
  }

  // alpha_hat is the unscaled selection matrix (b, 1, rows, n); channel n of
  // the decoder branch is scaled by n_channels * alpha_hat.
  Tensor<T> decode(const FeaturePyramid<T>& pyr, const Tensor<T>& alpha_hat,
                   TransformerCache<T>* cache) const {
    int hf = cfg.half();
    int b = pyr.levels[0].b;
    if (alpha_hat.b != b || alpha_hat.h != hf || alpha_hat.w != cfg.n)
      throw ArgumentError("transformer decode: alpha shape " + alpha_hat.shape_str() +
                          " does not match " + std::to_string(hf) + " rows x " +
                          std::to_string(cfg.n));
    Tensor<T> alpha = alpha_hat;
    for (auto& v : alpha.data) v *= T(cfg.n);
    if (cache) {
      cache->alpha_scaled = alpha;
      cache->concat_pre.resize(hf);
      cache->dec_conv.resize(hf);
      cache->dec_norm.resize(hf);
      cache->block_pre.resize(hf);
      cache->block_out.resize(hf);
    }

    Tensor<T> prev = pyr.levels[hf];
    for (int d = 0; d < hf; ++d) {
      const Tensor<T>& skip = pyr.levels[hf - d];
      Tensor<T> cat(b, 2 * cfg.n, skip.h, skip.w);
      for (int bi = 0; bi < b; ++bi)
        for (int ch = 0; ch < cfg.n; ++ch) {
          const T* s = skip.plane(bi, ch);
          const T* p = prev.plane(bi, ch);
          T* cs = cat.plane(bi, ch);
          T* cp = cat.plane(bi, cfg.n + ch);
          T a = alpha.at(bi, 0, d, ch);
          int m = skip.h * skip.w;
          for (int i = 0; i < m; ++i) {
            cs[i] = s[i];
            cp[i] = a * p[i];
          }
        }
      if (cache) cache->concat_pre[d] = cat;

      Tensor<T> a = relu_forward(cat);
      const Tensor<T>& target = pyr.levels[hf - d - 1];
      DeconvCache<T>* dc = cache ? &cache->dec_conv[d] : nullptr;
      Tensor<T> z = deconv2d_forward(a, dec_w[d].value, dec_b[d].value, 2, Padding{1, 1},
                                     target.h, target.w, dc);
      if (cache) cache->block_pre[d] = z;
      Tensor<T> out;
      if (d < hf - 1) {
        NormCache<T>* nc = cache ? &cache->dec_norm[d] : nullptr;
        out = instance_norm_forward(z, dec_gamma[d].value, dec_beta[d].value, T(1e-5), nc);
      } else {
        out = tanh_forward(z);
      }
      if (cache) cache->block_out[d] = out;
      prev = std::move(out);
    }
    return prev;
  }

  Tensor<T> forward(const Tensor<T>& stack, const Tensor<T>& alpha_hat,
                    TransformerCache<T>* cache = nullptr) const {
    FeaturePyramid<T> pyr = encode(stack, cache);
    return decode(pyr, alpha_hat, cache);
  }

  // Accumulates parameter gradients; returns (d stack, d alpha_hat).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dout, const TransformerCache<T>& c) {
    int hf = cfg.half();
    int b = dout.b;
    const FeaturePyramid<T>& pyr = c.pyramid;
    std::vector<Tensor<T>> dlevels;
    for (const auto& lvl : pyr.levels) {
      Tensor<T> z = Tensor<T>::zeros_like(lvl);
      dlevels.push_back(std::move(z));
    }
    Tensor<T> dalpha_scaled(b, 1, hf, cfg.n);
    dalpha_scaled.fill(T(0));

    Tensor<T> gout = dout;
    for (int d = hf - 1; d >= 0; --d) {
      Tensor<T> gz = d == hf - 1
                         ? tanh_backward(gout, c.block_out[d])
                         : instance_norm_backward(gout, dec_gamma[d].value, c.dec_norm[d],
                                                  dec_gamma[d].grad, dec_beta[d].grad);
      Tensor<T> ga = deconv2d_backward(gz, dec_w[d].value, c.dec_conv[d], dec_w[d].grad,
                                       dec_b[d].grad);
      Tensor<T> gcat = relu_backward(ga, c.concat_pre[d]);

      const Tensor<T>& prev = d == 0 ? pyr.levels[hf] : c.block_out[d - 1];
      Tensor<T> gprev = Tensor<T>::zeros_like(prev);
      int m = prev.h * prev.w;
      for (int bi = 0; bi < b; ++bi)
        for (int ch = 0; ch < cfg.n; ++ch) {
          const T* gs = gcat.plane(bi, ch);
          const T* gp = gcat.plane(bi, cfg.n + ch);
          const T* pv = prev.plane(bi, ch);
          T* ds = dlevels[hf - d].plane(bi, ch);
          T* dp = gprev.plane(bi, ch);
          T a = c.alpha_scaled.at(bi, 0, d, ch);
          T acc = T(0);
          for (int i = 0; i < m; ++i) {
            ds[i] += gs[i];
            dp[i] = a * gp[i];
            acc += gp[i] * pv[i];
          }
          dalpha_scaled.at(bi, 0, d, ch) += acc;
        }
      if (d == 0) {
        dlevels[hf].add_scaled(gprev, T(1));
      } else {
        gout = std::move(gprev);
      }
    }

    for (int k = hf - 1; k >= 0; --k) {
      Tensor<T>& glvl = dlevels[k + 1];
      if (k == 0) {
        Tensor<T> gin = conv2d_backward(glvl, enc_w[0].value, c.enc_conv[0], enc_w[0].grad,
                                        enc_b[0].grad);
        dlevels[0].add_scaled(gin, T(1));
      } else {
        Tensor<T> gz = instance_norm_backward(glvl, enc_gamma[k - 1].value, c.enc_norm[k],
                                              enc_gamma[k - 1].grad, enc_beta[k - 1].grad);
        Tensor<T> ga = conv2d_backward(gz, enc_w[k].value, c.enc_conv[k], enc_w[k].grad,
                                       enc_b[k].grad);
        dlevels[k].add_scaled(relu_backward(ga, pyr.levels[k]), T(1));
      }
    }

    Tensor<T> dalpha_hat = dalpha_scaled;
    for (auto& v : dalpha_hat.data) v *= T(cfg.n);
    return {std::move(dlevels[0]), std::move(dalpha_hat)};
  }

  // Final-block pre-activation split: contributions through the skip channels
  // ("background") and through the modulated channels ("foreground") are
  // additive, so either part can be zeroed before the tanh. Full mode returns
  // the forward output itself (the split sum only reproduces it to rounding).
  Tensor<T> decompose(const Tensor<T>& stack, const Tensor<T>& alpha_hat,
                      DecomposeMode mode) const {
    TransformerCache<T> cache;
    Tensor<T> out = forward(stack, alpha_hat, &cache);
    if (mode == DecomposeMode::kFull) return out;
    DecompositionProbe<T> parts = split_final_block(cache);
    const Tensor<T>& keep =
        mode == DecomposeMode::kForeground ? parts.modulated_part : parts.skip_part;
    Tensor<T> z(keep.b, cfg.c, keep.h, keep.w);
    for (int bi = 0; bi < keep.b; ++bi)
      for (int ch = 0; ch < cfg.c; ++ch) {
        T* dst = z.plane(bi, ch);
        const T* src = keep.plane(bi, ch);
        T bs = parts.bias.data[ch];
        int m = keep.h * keep.w;
        for (int i = 0; i < m; ++i) dst[i] = src[i] + bs;
      }
    return tanh_forward(z);
  }

  DecompositionProbe<T> probe_decomposition(const Tensor<T>& stack,
                                            const Tensor<T>& alpha_hat) const {
    TransformerCache<T> cache;
    forward(stack, alpha_hat, &cache);
    return split_final_block(cache);
  }

 private:
  DecompositionProbe<T> split_final_block(const TransformerCache<T>& cache) const {
    int hf = cfg.half();
    Tensor<T> a = relu_forward(cache.concat_pre[hf - 1]);
    int b = a.b;

    Tensor<T> askip(b, cfg.n, a.h, a.w), amod(b, cfg.n, a.h, a.w);
    int m = a.h * a.w;
    for (int bi = 0; bi < b; ++bi)
      for (int ch = 0; ch < cfg.n; ++ch) {
        std::copy(a.plane(bi, ch), a.plane(bi, ch) + m, askip.plane(bi, ch));
        std::copy(a.plane(bi, cfg.n + ch), a.plane(bi, cfg.n + ch) + m, amod.plane(bi, ch));
      }

    // split the (2n, cout, k, k) kernel bank into its skip and modulated halves
    const Tensor<T>& w = dec_w[hf - 1].value;
    Tensor<T> wskip(cfg.n, w.c, w.h, w.w), wmod(cfg.n, w.c, w.h, w.w);
    size_t half_sz = wskip.size();
    std::copy(w.data.begin(), w.data.begin() + half_sz, wskip.data.begin());
    std::copy(w.data.begin() + half_sz, w.data.end(), wmod.data.begin());
    Tensor<T> zero_bias(1, w.c, 1, 1);
    zero_bias.fill(T(0));

    DecompositionProbe<T> probe;
    int th = cache.pyramid.levels[0].h, tw = cache.pyramid.levels[0].w;
    probe.skip_part = deconv2d_forward(askip, wskip, zero_bias, 2, Padding{1, 1}, th, tw,
                                       static_cast<DeconvCache<T>*>(nullptr));
    probe.modulated_part = deconv2d_forward(amod, wmod, zero_bias, 2, Padding{1, 1}, th, tw,
                                            static_cast<DeconvCache<T>*>(nullptr));
    probe.bias = dec_b[hf - 1].value;
    probe.full_pre = cache.block_pre[hf - 1];
    return probe;
  }

  void reset_norm_affine() {
    for (auto& p : enc_gamma) p.init_const(T(1));
    for (auto& p : dec_gamma) p.init_const(T(1));
    for (auto& p : enc_beta) p.init_const(T(0));
    for (auto& p : dec_beta) p.init_const(T(0));
  }
};

// Uniform selection (every channel weight 1 after scaling): with this matrix
// the dual network reduces to a plain U-net.
template <typename T>
Tensor<T> uniform_alpha_hat(int b, int rows, int n) {
  Tensor<T> a(b, 1, rows, n);
  a.fill(T(1) / T(n));
  return a;
}

}  // namespace motionsel
