#pragma once

#include "damba/params.hpp"

namespace damba {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore. Deterministic given the gradient
// sequence; parameters are visited in registration order.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update reading each parameter's gradient from the tape leaf
  // it is bound to. A parameter whose bound leaf received no adjoint (empty
  // grad) is treated as having zero gradient.
  void step(ParamStore& store, const Tape& tape);

  long long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long long step_count_ = 0;
};

}  // namespace damba
