#pragma once

#include <functional>
#include <string>
#include <vector>

#include "damba/params.hpp"

namespace damba {

// f rebuilds the scalar objective on the given tape each call. Parameters
// are bound by grad_check before f runs; f reads them through their bound
// leaves.
using ScalarFn = std::function<Var(Tape&)>;

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    long long worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  bool pass = false;
  bool nan_detected = false;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::vector<Entry> per_param;
};

// Compares reverse-mode gradients against central finite differences for
// every entry of every parameter. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-4), so near-zero gradients are compared
// absolutely at a scale well above finite-difference noise.
GradCheckReport grad_check(const ScalarFn& f, ParamStore& params, double step, double tol);

}  // namespace damba
