#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "motionsel/errors.hpp"

namespace motionsel {

// Dense row-major tensor with a fixed (b, c, h, w) layout. Frames use b = 1,
// flat vectors use (1, n, 1, 1). Small enough to copy by value where handy.
template <typename T>
struct Tensor {
  int b = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int b_, int c_, int h_, int w_)
      : b(b_), c(c_), h(h_), w(w_),
        data(static_cast<size_t>(b_) * c_ * h_ * w_, T(0)) {}

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.b, o.c, o.h, o.w); }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  T& at(int bi, int ci, int y, int x) {
    return data[((static_cast<size_t>(bi) * c + ci) * h + y) * w + x];
  }
  const T& at(int bi, int ci, int y, int x) const {
    return data[((static_cast<size_t>(bi) * c + ci) * h + y) * w + x];
  }

  T* plane(int bi, int ci) { return data.data() + ((static_cast<size_t>(bi) * c + ci) * h) * w; }
  const T* plane(int bi, int ci) const {
    return data.data() + ((static_cast<size_t>(bi) * c + ci) * h) * w;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  void add_scaled(const Tensor& o, T s) {
    for (size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(b, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  T max_abs() const {
    T m = 0;
    for (T v : data) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
  if (!a.same_shape(b))
    throw ArgumentError(std::string(where) + ": shape mismatch " + a.shape_str() +
                        " vs " + b.shape_str());
}

}  // namespace motionsel
