#pragma once

#include <optional>

#include "motionsel/selector.hpp"
#include "motionsel/transformer.hpp"

namespace motionsel {

// The dual network: transformation net plus (optionally) the selection net.
// Without a selector the model runs with uniform selection weights, which is
// the plain U-net baseline.

template <typename T>
struct Model {
  Transformer<T> transformer;
  std::optional<Selector<T>> selector;

  Model(const TransformerConfig& tcfg, const std::optional<SelectorConfig>& scfg)
      : transformer(tcfg) {
    if (scfg) {
      if (scfg->rows != tcfg.half() || scfg->n != tcfg.n || scfg->delta != tcfg.delta ||
          scfg->c != tcfg.c || scfg->h != tcfg.h || scfg->w != tcfg.w)
        throw ArgumentError("model: selector config disagrees with transformer config");
      selector.emplace(*scfg);
    }
  }

  bool use_selector() const { return selector.has_value(); }

  void init(Rng& rng) {
    transformer.init(rng);
    if (selector) selector->init(rng);
  }

  void visit_params(const ParamVisitor<T>& f) {
    transformer.visit_params(f);
    if (selector) selector->visit_params(f);
  }

  void visit_state(const StateVisitor<T>& f) {
    if (selector) selector->visit_state(f);
  }

  void zero_grads() {
    transformer.zero_grads();
    if (selector) selector->zero_grads();
  }

  template <typename U>
  Model<U> cast() const {
    std::optional<SelectorConfig> scfg;
    if (selector) scfg = selector->cfg;
    Model<U> out(transformer.cfg, scfg);
    auto copy = [](const Tensor<T>& src, Tensor<U>& dst) { dst = src.template cast<U>(); };
    // parameter visit order is construction order, identical across T
    std::vector<Tensor<U>*> dst_vals;
    out.visit_params(
        [&](const std::string&, Tensor<U>& v, Tensor<U>&) { dst_vals.push_back(&v); });
    size_t i = 0;
    const_cast<Model<T>*>(this)->visit_params([&](const std::string&, Tensor<T>& v, Tensor<T>&) {
      copy(v, *dst_vals[i++]);
    });
    std::vector<Tensor<U>*> dst_states;
    out.visit_state([&](const std::string&, Tensor<U>& v) { dst_states.push_back(&v); });
    i = 0;
    const_cast<Model<T>*>(this)->visit_state(
        [&](const std::string&, Tensor<T>& v) { copy(v, *dst_states[i++]); });
    return out;
  }
};

}  // namespace motionsel
