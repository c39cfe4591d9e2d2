#pragma once

#include <functional>
#include <string>

#include "motionsel/rng.hpp"
#include "motionsel/tensor.hpp"

namespace motionsel {

// A learnable tensor paired with its gradient accumulator.
template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(int b, int c, int h, int w) : value(b, c, h, w), grad(b, c, h, w) {
    value.fill(T(0));
    grad.fill(T(0));
  }

  void init_gaussian(Rng& rng, double stddev) {
    for (auto& v : value.data) v = static_cast<T>(rng.gaussian(0.0, stddev));
  }
  void init_const(T x) { value.fill(x); }
};

// Visitors receive (name, value, grad) for learnables and (name, value) for
// non-learnable state such as running statistics.
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&, Tensor<T>&)>;
template <typename T>
using StateVisitor = std::function<void(const std::string&, Tensor<T>&)>;

}  // namespace motionsel
