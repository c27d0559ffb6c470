#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdembed/error.hpp"
#include "mdembed/tensor.hpp"

namespace mdembed {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with bias correction and decoupled weight decay. Gradient zeroing is
// explicit: the caller decides when to clear, which is what makes gradient
// accumulation across micro-batches work.
template <typename S>
class AdamW {
 public:
  AdamW(AdamWConfig cfg,
        std::vector<std::pair<std::string, Tensor<S>>> params)
      : cfg_(cfg), params_(std::move(params)) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].second.numel(), S(0));
      v_[i].assign(params_[i].second.numel(), S(0));
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::uint64_t step_count() const { return step_; }

  void zero_grad() {
    for (auto& [name, p] : params_)
      if (p.has_grad()) p.zero_grad();
  }

  void step() {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (std::size_t b = 0; b < params_.size(); ++b) {
      auto& [name, p] = params_[b];
      if (!p.has_grad())
        throw value_error("AdamW::step: block '" + name +
                          "' has no gradient buffer");
      if (m_[b].size() != p.numel())
        throw value_error("AdamW::step: block '" + name +
                          "' changed size since state initialization");
      auto& val = p.value();
      auto& grad = p.grad();
      for (std::size_t i = 0; i < val.size(); ++i) {
        double g = double(grad[i]);
        if (!std::isfinite(g))
          throw value_error("AdamW::step: non-finite gradient in block '" +
                            name + "'");
        double m = cfg_.beta1 * double(m_[b][i]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * double(v_[b][i]) + (1.0 - cfg_.beta2) * g * g;
        m_[b][i] = S(m);
        v_[b][i] = S(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
        val[i] = S(double(val[i]) -
                   cfg_.lr * (update + cfg_.weight_decay * double(val[i])));
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace mdembed
