#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "motionsel/errors.hpp"
#include "motionsel/tensor.hpp"

// Hand-rolled layer primitives, templated so the same code runs in float for
// training and in double for finite-difference gradient checks. Convolutions
// go through im2col + GEMM. Every backward function *accumulates* into the
// supplied gradient tensors, which is what backprop-through-time needs.

namespace motionsel {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

struct Padding {
  int top = 0;
  int left = 0;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline int conv_out_size(int size, int stride) { return ceil_div(size, stride); }

// "same" padding with ceil-mode output size; when the total is odd the extra
// pixel goes after, matching the usual tensorflow convention.
inline Padding same_padding(int h, int w, int kh, int kw, int stride) {
  int th = std::max(0, (conv_out_size(h, stride) - 1) * stride + kh - h);
  int tw = std::max(0, (conv_out_size(w, stride) - 1) * stride + kw - w);
  return {th / 2, tw / 2};
}

namespace detail {

// Patch matrix: rows index (cin, ky, kx), columns index output pixels.
template <typename T>
void im2col(const Tensor<T>& in, int bi, int kh, int kw, int stride, Padding pad, int oh, int ow,
            Mat<T>& cols) {
  cols.resize(in.c * kh * kw, oh * ow);
  for (int ci = 0; ci < in.c; ++ci) {
    const T* plane = in.plane(bi, ci);
    for (int u = 0; u < kh; ++u)
      for (int v = 0; v < kw; ++v) {
        T* row = cols.data() + (static_cast<size_t>(ci) * kh * kw + u * kw + v) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          int iy = y * stride + u - pad.top;
          if (iy < 0 || iy >= in.h) {
            std::fill(row + y * ow, row + (y + 1) * ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<size_t>(iy) * in.w;
          for (int x = 0; x < ow; ++x) {
            int ix = x * stride + v - pad.left;
            row[y * ow + x] = (ix < 0 || ix >= in.w) ? T(0) : src[ix];
          }
        }
      }
  }
}

// Adjoint of im2col: scatter-add patch columns back into an image.
template <typename T>
void col2im(const Mat<T>& cols, int bi, int kh, int kw, int stride, Padding pad, int oh, int ow,
            Tensor<T>& out) {
  for (int ci = 0; ci < out.c; ++ci) {
    T* plane = out.plane(bi, ci);
    for (int u = 0; u < kh; ++u)
      for (int v = 0; v < kw; ++v) {
        const T* row = cols.data() + (static_cast<size_t>(ci) * kh * kw + u * kw + v) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          int iy = y * stride + u - pad.top;
          if (iy < 0 || iy >= out.h) continue;
          T* dst = plane + static_cast<size_t>(iy) * out.w;
          for (int x = 0; x < ow; ++x) {
            int ix = x * stride + v - pad.left;
            if (ix >= 0 && ix < out.w) dst[ix] += row[y * ow + x];
          }
        }
      }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution. weight is (cout, cin, kh, kw), bias is (1, cout, 1, 1).

template <typename T>
struct ConvCache {
  Tensor<T> in;
  int kh = 0, kw = 0, stride = 1, oh = 0, ow = 0;
  Padding pad;
};

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias,
                         int stride, Padding pad, int oh, int ow, ConvCache<T>* cache) {
  int cout = weight.b, cin = weight.c, kh = weight.h, kw = weight.w;
  if (in.c != cin) throw ArgumentError("conv2d: channel mismatch");
  Tensor<T> out(in.b, cout, oh, ow);
  ConstMatMap<T> wmat(weight.data.data(), cout, cin * kh * kw);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data.data(), cout);
  Mat<T> cols;
  for (int bi = 0; bi < in.b; ++bi) {
    detail::im2col(in, bi, kh, kw, stride, pad, oh, ow, cols);
    MatMap<T> omat(out.plane(bi, 0), cout, oh * ow);
    omat.noalias() = wmat * cols;
    omat.colwise() += bvec;
  }
  if (cache) {
    cache->in = in;
    cache->kh = kh;
    cache->kw = kw;
    cache->stride = stride;
    cache->pad = pad;
    cache->oh = oh;
    cache->ow = ow;
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias,
                      int stride, ConvCache<T>* cache) {
  int oh = conv_out_size(in.h, stride), ow = conv_out_size(in.w, stride);
  Padding pad = same_padding(in.h, in.w, weight.h, weight.w, stride);
  return conv2d_forward(in, weight, bias, stride, pad, oh, ow, cache);
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& g, const Tensor<T>& weight, const ConvCache<T>& c,
                          Tensor<T>& dweight, Tensor<T>& dbias) {
  const Tensor<T>& in = c.in;
  int cout = weight.b, cin = weight.c;
  Tensor<T> din(in.b, in.c, in.h, in.w);
  din.fill(T(0));
  ConstMatMap<T> wmat(weight.data.data(), cout, cin * c.kh * c.kw);
  MatMap<T> dwmat(dweight.data.data(), cout, cin * c.kh * c.kw);
  Mat<T> cols, dcols;
  for (int bi = 0; bi < in.b; ++bi) {
    ConstMatMap<T> gmat(g.plane(bi, 0), cout, c.oh * c.ow);
    detail::im2col(in, bi, c.kh, c.kw, c.stride, c.pad, c.oh, c.ow, cols);
    dwmat.noalias() += gmat * cols.transpose();
    // fixed-order accumulation keeps gradients bitwise reproducible across
    // runs regardless of heap alignment
    for (int ci = 0; ci < cout; ++ci) {
      const T* plane = g.plane(bi, ci);
      T acc = T(0);
      for (int i = 0; i < c.oh * c.ow; ++i) acc += plane[i];
      dbias.data[ci] += acc;
    }
    dcols.noalias() = wmat.transpose() * gmat;
    detail::col2im(dcols, bi, c.kh, c.kw, c.stride, c.pad, c.oh, c.ow, din);
  }
  return din;
}

// ---------------------------------------------------------------------------
// Transposed convolution. weight is (cin, cout, kh, kw); the caller names the
// target spatial size, which trims the usual one-pixel ambiguity of stride-2
// upsampling. Forward scatters through col2im; backward gathers via im2col.

template <typename T>
struct DeconvCache {
  Tensor<T> in;
  int kh = 0, kw = 0, stride = 1, oh = 0, ow = 0;
  Padding pad;
};

template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride, Padding pad, int oh, int ow, DeconvCache<T>* cache) {
  int cin = weight.b, cout = weight.c, kh = weight.h, kw = weight.w;
  if (in.c != cin) throw ArgumentError("deconv2d: channel mismatch");
  Tensor<T> out(in.b, cout, oh, ow);
  out.fill(T(0));
  ConstMatMap<T> wmat(weight.data.data(), cin, cout * kh * kw);
  Mat<T> cols;
  for (int bi = 0; bi < in.b; ++bi) {
    ConstMatMap<T> imat(in.plane(bi, 0), cin, in.h * in.w);
    cols.noalias() = wmat.transpose() * imat;
    detail::col2im(cols, bi, kh, kw, stride, pad, in.h, in.w, out);
    for (int ci = 0; ci < cout; ++ci) {
      T* plane = out.plane(bi, ci);
      T b = bias.data[ci];
      for (int i = 0; i < oh * ow; ++i) plane[i] += b;
    }
  }
  if (cache) {
    cache->in = in;
    cache->kh = kh;
    cache->kw = kw;
    cache->stride = stride;
    cache->pad = pad;
    cache->oh = oh;
    cache->ow = ow;
  }
  return out;
}

template <typename T>
Tensor<T> deconv2d_backward(const Tensor<T>& g, const Tensor<T>& weight, const DeconvCache<T>& c,
                            Tensor<T>& dweight, Tensor<T>& dbias) {
  const Tensor<T>& in = c.in;
  int cin = weight.b, cout = weight.c;
  Tensor<T> din(in.b, in.c, in.h, in.w);
  ConstMatMap<T> wmat(weight.data.data(), cin, cout * c.kh * c.kw);
  MatMap<T> dwmat(dweight.data.data(), cin, cout * c.kh * c.kw);
  Mat<T> cols;
  for (int bi = 0; bi < in.b; ++bi) {
    detail::im2col(g, bi, c.kh, c.kw, c.stride, c.pad, in.h, in.w, cols);
    ConstMatMap<T> imat(in.plane(bi, 0), cin, in.h * in.w);
    MatMap<T> dimat(din.plane(bi, 0), cin, in.h * in.w);
    dimat.noalias() = wmat * cols;
    dwmat.noalias() += imat * cols.transpose();
    for (int ci = 0; ci < cout; ++ci) {
      const T* plane = g.plane(bi, ci);
      T acc = T(0);
      for (int i = 0; i < c.oh * c.ow; ++i) acc += plane[i];
      dbias.data[ci] += acc;
    }
  }
  return din;
}

// ---------------------------------------------------------------------------
// Instance norm: normalizes each (batch, channel) plane. gamma/beta (1,c,1,1).

template <typename T>
struct NormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;  // one entry per normalized group
  bool train = true;
};

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& in, const Tensor<T>& gamma, const Tensor<T>& beta,
                                T eps, NormCache<T>* cache) {
  Tensor<T> out(in.b, in.c, in.h, in.w);
  Tensor<T> xhat(in.b, in.c, in.h, in.w);
  std::vector<T> inv_std(static_cast<size_t>(in.b) * in.c);
  int m = in.h * in.w;
  for (int bi = 0; bi < in.b; ++bi)
    for (int ci = 0; ci < in.c; ++ci) {
      const T* src = in.plane(bi, ci);
      T mean = T(0);
      for (int i = 0; i < m; ++i) mean += src[i];
      mean /= m;
      T var = T(0);
      for (int i = 0; i < m; ++i) {
        T d = src[i] - mean;
        var += d * d;
      }
      var /= m;
      T inv = T(1) / std::sqrt(var + eps);
      inv_std[bi * in.c + ci] = inv;
      T* xh = xhat.plane(bi, ci);
      T* dst = out.plane(bi, ci);
      T gm = gamma.data[ci], bt = beta.data[ci];
      for (int i = 0; i < m; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gm * xh[i] + bt;
      }
    }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> instance_norm_backward(const Tensor<T>& g, const Tensor<T>& gamma, const NormCache<T>& c,
                                 Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const Tensor<T>& xhat = c.xhat;
  Tensor<T> din(g.b, g.c, g.h, g.w);
  int m = g.h * g.w;
  for (int bi = 0; bi < g.b; ++bi)
    for (int ci = 0; ci < g.c; ++ci) {
      const T* gp = g.plane(bi, ci);
      const T* xh = xhat.plane(bi, ci);
      T sum_g = T(0), sum_gx = T(0);
      for (int i = 0; i < m; ++i) {
        sum_g += gp[i];
        sum_gx += gp[i] * xh[i];
      }
      dgamma.data[ci] += sum_gx;
      dbeta.data[ci] += sum_g;
      T mean_g = sum_g / m, mean_gx = sum_gx / m;
      T scale = gamma.data[ci] * c.inv_std[bi * g.c + ci];
      T* dst = din.plane(bi, ci);
      for (int i = 0; i < m; ++i) dst[i] = scale * (gp[i] - mean_g - xh[i] * mean_gx);
    }
  return din;
}

// ---------------------------------------------------------------------------
// Batch norm over (batch, h, w) per channel, with running statistics for eval.
// update_running is separate from train so finite-difference probes can rerun
// forward without drifting the running averages.

template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& in, const Tensor<T>& gamma, const Tensor<T>& beta,
                             Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                             bool update_running, T momentum, T eps, NormCache<T>* cache) {
  Tensor<T> out(in.b, in.c, in.h, in.w);
  int m = in.b * in.h * in.w;
  int plane_n = in.h * in.w;
  if (!train) {
    // Eval mode still caches xhat: the full-sequence training stage runs the
    // network with frozen statistics and needs gradients through this path.
    Tensor<T> xhat(in.b, in.c, in.h, in.w);
    std::vector<T> inv_std(in.c);
    for (int ci = 0; ci < in.c; ++ci) {
      T inv = T(1) / std::sqrt(running_var.data[ci] + eps);
      inv_std[ci] = inv;
      T gm = gamma.data[ci], bt = beta.data[ci], mu = running_mean.data[ci];
      for (int bi = 0; bi < in.b; ++bi) {
        const T* src = in.plane(bi, ci);
        T* xh = xhat.plane(bi, ci);
        T* dst = out.plane(bi, ci);
        for (int i = 0; i < plane_n; ++i) {
          xh[i] = (src[i] - mu) * inv;
          dst[i] = gm * xh[i] + bt;
        }
      }
    }
    if (cache) {
      cache->train = false;
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return out;
  }

  Tensor<T> xhat(in.b, in.c, in.h, in.w);
  std::vector<T> inv_std(in.c);
  for (int ci = 0; ci < in.c; ++ci) {
    T mean = T(0);
    for (int bi = 0; bi < in.b; ++bi) {
      const T* src = in.plane(bi, ci);
      for (int i = 0; i < plane_n; ++i) mean += src[i];
    }
    mean /= m;
    T var = T(0);
    for (int bi = 0; bi < in.b; ++bi) {
      const T* src = in.plane(bi, ci);
      for (int i = 0; i < plane_n; ++i) {
        T d = src[i] - mean;
        var += d * d;
      }
    }
    var /= m;
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[ci] = inv;
    if (update_running) {
      running_mean.data[ci] = momentum * running_mean.data[ci] + (T(1) - momentum) * mean;
      running_var.data[ci] = momentum * running_var.data[ci] + (T(1) - momentum) * var;
    }
    T gm = gamma.data[ci], bt = beta.data[ci];
    for (int bi = 0; bi < in.b; ++bi) {
      const T* src = in.plane(bi, ci);
      T* xh = xhat.plane(bi, ci);
      T* dst = out.plane(bi, ci);
      for (int i = 0; i < plane_n; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gm * xh[i] + bt;
      }
    }
  }
  if (cache) {
    cache->train = true;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& g, const Tensor<T>& gamma, const NormCache<T>& c,
                              Tensor<T>& dgamma, Tensor<T>& dbeta) {
  Tensor<T> din(g.b, g.c, g.h, g.w);
  int plane_n = g.h * g.w;
  if (!c.train) {
    // Frozen statistics: the normalization is a per-channel affine map, so
    // dIn is a plain rescale and dgamma/dbeta reduce over the cached xhat.
    for (int ci = 0; ci < g.c; ++ci) {
      T scale = gamma.data[ci] * c.inv_std[ci];
      T sum_g = T(0), sum_gx = T(0);
      for (int bi = 0; bi < g.b; ++bi) {
        const T* gp = g.plane(bi, ci);
        const T* xh = c.xhat.plane(bi, ci);
        T* dst = din.plane(bi, ci);
        for (int i = 0; i < plane_n; ++i) {
          dst[i] = scale * gp[i];
          sum_g += gp[i];
          sum_gx += gp[i] * xh[i];
        }
      }
      dgamma.data[ci] += sum_gx;
      dbeta.data[ci] += sum_g;
    }
    return din;
  }
  int m = g.b * plane_n;
  for (int ci = 0; ci < g.c; ++ci) {
    T sum_g = T(0), sum_gx = T(0);
    for (int bi = 0; bi < g.b; ++bi) {
      const T* gp = g.plane(bi, ci);
      const T* xh = c.xhat.plane(bi, ci);
      for (int i = 0; i < plane_n; ++i) {
        sum_g += gp[i];
        sum_gx += gp[i] * xh[i];
      }
    }
    dgamma.data[ci] += sum_gx;
    dbeta.data[ci] += sum_g;
    T mean_g = sum_g / m, mean_gx = sum_gx / m;
    T scale = gamma.data[ci] * c.inv_std[ci];
    for (int bi = 0; bi < g.b; ++bi) {
      const T* gp = g.plane(bi, ci);
      const T* xh = c.xhat.plane(bi, ci);
      T* dst = din.plane(bi, ci);
      for (int i = 0; i < plane_n; ++i) dst[i] = scale * (gp[i] - mean_g - xh[i] * mean_gx);
    }
  }
  return din;
}

// ---------------------------------------------------------------------------
// Fully connected layer on flattened activations (b, n, 1, 1).
// weight (out_n, in_n, 1, 1), bias (1, out_n, 1, 1).

template <typename T>
struct DenseCache {
  Tensor<T> in;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias,
                        DenseCache<T>* cache) {
  int n = in.c, out_n = weight.b;
  if (weight.c != n) throw ArgumentError("dense: width mismatch");
  Tensor<T> out(in.b, out_n, 1, 1);
  ConstMatMap<T> imat(in.data.data(), in.b, n);
  ConstMatMap<T> wmat(weight.data.data(), out_n, n);
  MatMap<T> omat(out.data.data(), in.b, out_n);
  omat.noalias() = imat * wmat.transpose();
  for (int bi = 0; bi < in.b; ++bi)
    for (int i = 0; i < out_n; ++i) out.data[bi * out_n + i] += bias.data[i];
  if (cache) cache->in = in;
  return out;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& g, const Tensor<T>& weight, const DenseCache<T>& c,
                         Tensor<T>& dweight, Tensor<T>& dbias) {
  int n = weight.c, out_n = weight.b;
  Tensor<T> din(c.in.b, n, 1, 1);
  ConstMatMap<T> gmat(g.data.data(), g.b, out_n);
  ConstMatMap<T> imat(c.in.data.data(), c.in.b, n);
  ConstMatMap<T> wmat(weight.data.data(), out_n, n);
  MatMap<T> dwmat(dweight.data.data(), out_n, n);
  MatMap<T> dimat(din.data.data(), din.b, n);
  dwmat.noalias() += gmat.transpose() * imat;
  dimat.noalias() = gmat * wmat;
  for (int bi = 0; bi < g.b; ++bi)
    for (int i = 0; i < out_n; ++i) dbias.data[i] += g.data[bi * out_n + i];
  return din;
}

// ---------------------------------------------------------------------------
// Activations. relu_backward takes the pre-activation, tanh_backward the
// output.

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& in) {
  Tensor<T> out(in.b, in.c, in.h, in.w);
  for (size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& g, const Tensor<T>& pre) {
  Tensor<T> din(g.b, g.c, g.h, g.w);
  for (size_t i = 0; i < g.data.size(); ++i) din.data[i] = pre.data[i] > T(0) ? g.data[i] : T(0);
  return din;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& in) {
  Tensor<T> out(in.b, in.c, in.h, in.w);
  for (size_t i = 0; i < in.data.size(); ++i) out.data[i] = std::tanh(in.data[i]);
  return out;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& g, const Tensor<T>& out) {
  Tensor<T> din(g.b, g.c, g.h, g.w);
  for (size_t i = 0; i < g.data.size(); ++i)
    din.data[i] = g.data[i] * (T(1) - out.data[i] * out.data[i]);
  return din;
}

// ---------------------------------------------------------------------------
// Row-wise softmax over the last axis of (b, 1, rows, n), max-subtracted for
// stability. Backward takes the softmax output.

template <typename T>
Tensor<T> row_softmax_forward(const Tensor<T>& in) {
  Tensor<T> out(in.b, in.c, in.h, in.w);
  for (int bi = 0; bi < in.b; ++bi)
    for (int ci = 0; ci < in.c; ++ci)
      for (int r = 0; r < in.h; ++r) {
        const T* src = in.plane(bi, ci) + static_cast<size_t>(r) * in.w;
        T* dst = out.plane(bi, ci) + static_cast<size_t>(r) * in.w;
        T mx = src[0];
        for (int i = 1; i < in.w; ++i) mx = std::max(mx, src[i]);
        T sum = T(0);
        for (int i = 0; i < in.w; ++i) {
          dst[i] = std::exp(src[i] - mx);
          sum += dst[i];
        }
        for (int i = 0; i < in.w; ++i) dst[i] /= sum;
      }
  return out;
}

template <typename T>
Tensor<T> row_softmax_backward(const Tensor<T>& g, const Tensor<T>& out) {
  Tensor<T> din(g.b, g.c, g.h, g.w);
  for (int bi = 0; bi < g.b; ++bi)
    for (int ci = 0; ci < g.c; ++ci)
      for (int r = 0; r < g.h; ++r) {
        const T* gp = g.plane(bi, ci) + static_cast<size_t>(r) * g.w;
        const T* a = out.plane(bi, ci) + static_cast<size_t>(r) * g.w;
        T* dst = din.plane(bi, ci) + static_cast<size_t>(r) * g.w;
        T dot = T(0);
        for (int i = 0; i < g.w; ++i) dot += gp[i] * a[i];
        for (int i = 0; i < g.w; ++i) dst[i] = a[i] * (gp[i] - dot);
      }
  return din;
}

// ---------------------------------------------------------------------------
// Flatten (b, c, h, w) -> (b, c*h*w, 1, 1); layout is already contiguous.

template <typename T>
Tensor<T> flatten(const Tensor<T>& in) {
  Tensor<T> out(in.b, in.c * in.h * in.w, 1, 1);
  out.data = in.data;
  return out;
}

template <typename T>
Tensor<T> unflatten(const Tensor<T>& in, int c, int h, int w) {
  if (in.c != c * h * w) throw ArgumentError("unflatten: size mismatch");
  Tensor<T> out(in.b, c, h, w);
  out.data = in.data;
  return out;
}

}  // namespace motionsel
