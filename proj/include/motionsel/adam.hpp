#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "motionsel/model.hpp"

namespace motionsel {

// Learning rate halves every 2000 iterations.
inline double lr_schedule(double lr0, int64_t iter) {
  return lr0 * std::pow(2.0, -static_cast<double>(iter / 2000));
}

// Adam with bias correction; epsilon sits outside the square root, so the
// very first step moves each weight by -lr * g / (|g| + eps).
template <typename T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the gradients currently stored in the model.
  void step(Model<T>& model, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    model.visit_params([&](const std::string& name, Tensor<T>& value, Tensor<T>& grad) {
      if (!grad.all_finite())
        throw DivergenceError("non-finite gradient in " + name);
      Tensor<T>& m = slot(m_, name, value);
      Tensor<T>& v = slot(v_, name, value);
      for (size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        const double mi = beta1_ * static_cast<double>(m.data[i]) + (1.0 - beta1_) * g;
        const double vi = beta2_ * static_cast<double>(v.data[i]) + (1.0 - beta2_) * g * g;
        m.data[i] = static_cast<T>(mi);
        v.data[i] = static_cast<T>(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
        value.data[i] = static_cast<T>(static_cast<double>(value.data[i]) - lr * update);
      }
    });
  }

  int64_t steps_taken() const { return t_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

  // Moment access for checkpointing; iterates in deterministic (sorted) order.
  template <typename F>
  void visit_moments(F&& f) {
    for (auto& [name, m] : m_) f("adam.m." + name, m);
    for (auto& [name, v] : v_) f("adam.v." + name, v);
  }

  void restore_moment(const std::string& key, const Tensor<T>& t) {
    if (key.rfind("adam.m.", 0) == 0)
      m_[key.substr(7)] = t;
    else if (key.rfind("adam.v.", 0) == 0)
      v_[key.substr(7)] = t;
    else
      throw ArgumentError("not an optimizer moment key: " + key);
  }

  void set_steps_taken(int64_t t) { t_ = t; }

 private:
  Tensor<T>& slot(std::map<std::string, Tensor<T>>& store, const std::string& name,
                  const Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>::zeros_like(like)).first;
    else if (!it->second.same_shape(like))
      throw IncompatibleError("optimizer moment shape mismatch for " + name);
    return it->second;
  }

  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace motionsel
