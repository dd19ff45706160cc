#include "damba/grad_check.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

namespace {

double eval_scalar(const ScalarFn& f, ParamStore& params) {
  Tape tape;
  params.bind_all(tape);
  Var root = f(tape);
  return tape.scalar_value(root);
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, ParamStore& params, double step, double tol) {
  require(step > 0.0, "grad_check: step must be positive");
  GradCheckReport report;

  // Analytic pass.
  Tape tape;
  params.bind_all(tape);
  Var root = f(tape);
  const double f0 = tape.scalar_value(root);
  if (!std::isfinite(f0)) {
    report.nan_detected = true;
    report.pass = false;
    return report;
  }
  tape.backward(root);

  std::vector<Tensor> analytic;
  analytic.reserve(params.count());
  for (auto& p : params.items()) {
    Tensor g;
    g.resize_like(p->value);
    const Tensor& tg = tape.grad(p->bound);
    for (long long i = 0; i < g.size(); ++i) g[i] = tg.size() == g.size() ? tg[i] : 0.0;
    analytic.push_back(std::move(g));
  }

  // Central differences, one entry at a time.
  for (size_t pi = 0; pi < params.count(); ++pi) {
    Param& p = *params.items()[pi];
    GradCheckReport::Entry entry;
    entry.name = p.name;
    for (long long i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double fp = eval_scalar(f, params);
      p.value[i] = saved - step;
      const double fm = eval_scalar(f, params);
      p.value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.nan_detected = true;
        report.pass = false;
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double ga = analytic[pi][i];
      const double denom = std::max({std::fabs(ga), std::fabs(numeric), 1e-4});
      const double rel = std::fabs(ga - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = ga;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_err > report.max_rel_err) {
      report.max_rel_err = entry.max_rel_err;
      report.worst_param = entry.name;
    }
    report.per_param.push_back(std::move(entry));
  }

  report.pass = !report.nan_detected && report.max_rel_err < tol;
  return report;
}

}  // namespace damba
