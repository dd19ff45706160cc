#include "damba/optimizer.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

void Adam::step(ParamStore& store, const Tape& tape) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

  for (auto& up : store.items()) {
    Param& p = *up;
    if (p.m.size() != p.value.size()) {
      p.m.resize_like(p.value);
      p.m.fill(0.0);
      p.v.resize_like(p.value);
      p.v.fill(0.0);
    }
    const Tensor* g = nullptr;
    if (p.bound.valid()) {
      const Tensor& gt = tape.grad(p.bound);
      if (gt.size() == p.value.size()) g = &gt;
    }
    for (long long i = 0; i < p.value.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      if (!std::isfinite(gi))
        throw NumericError(msg("non-finite gradient for parameter ", p.name, " at index ", i));
      p.m[i] = cfg_.beta1 * p.m[i] + (1.0 - cfg_.beta1) * gi;
      p.v[i] = cfg_.beta2 * p.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace damba
