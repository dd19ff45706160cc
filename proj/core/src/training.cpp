#include "damba/training.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

void ObjectiveConfig::validate() const {
  require(alpha >= 0.0 && beta >= 0.0, "objective: alpha and beta must be >= 0");
  require(sigma > 0.0, "objective: sigma must be > 0");
  require(c0 >= 0.0, "objective: c0 must be >= 0");
  require(w1 > 0.0 && w2 > 0.0, "objective: fusion weights must be > 0");
}

Var l1_loss(Tape& tape, Var pred, Var truth) {
  require(tape.value(pred).size() > 0, "l1_loss: empty input");
  return tape.mean(tape.abs(tape.sub(pred, truth)));
}

double l1_loss_value(const Tensor& pred, const Tensor& truth) {
  require(pred.same_shape(truth), "l1_loss: shape mismatch");
  require(pred.size() > 0, "l1_loss: empty input");
  double acc = 0.0;
  for (long long i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

Var model_diff_reg(Tape& tape, const std::vector<Var>& theta_d, const std::vector<Var>& theta_c,
                   double sigma) {
  require(!theta_d.empty() && theta_d.size() == theta_c.size(),
          "model_diff_reg: no aligned parameters");
  require(sigma > 0.0, "model_diff_reg: sigma must be > 0");
  Var sum_sq;
  bool first = true;
  for (size_t i = 0; i < theta_d.size(); ++i) {
    require(tape.value(theta_d[i]).same_shape(tape.value(theta_c[i])),
            msg("model_diff_reg: parameter ", i, " shapes differ"));
    Var diff = tape.sub(theta_d[i], theta_c[i]);
    Var sq = tape.sum(tape.mul(diff, diff));
    sum_sq = first ? sq : tape.add(sum_sq, sq);
    first = false;
  }
  Var dist = tape.sqrt(sum_sq);
  return tape.exp(tape.mul_scalar(dist, -1.0 / (2.0 * sigma * sigma)));
}

Var repr_diff_reg(Tape& tape, Var r_d, Var r_c, double c0) {
  const Tensor& vd = tape.value(r_d);
  const Tensor& vc = tape.value(r_c);
  require(vd.rank() == 2 && vc.rank() == 2 && vd.dim(0) == vc.dim(0),
          "repr_diff_reg: leading dims must agree");
  require(c0 > 0.0, "repr_diff_reg: c0 must be > 0");
  Var gram = tape.matmul(tape.transpose(r_d), r_c);
  return tape.mul_scalar(tape.sqrt(tape.sum(tape.mul(gram, gram))), 1.0 / c0);
}

Var total_objective(Tape& tape, const std::vector<Var>& losses, Var s_m, Var s_r, double alpha,
                    double beta) {
  require(!losses.empty(), "total_objective: need at least one domain loss");
  Var acc = losses[0];
  for (size_t i = 1; i < losses.size(); ++i) acc = tape.add(acc, losses[i]);
  acc = tape.add(acc, tape.mul_scalar(s_m, alpha));
  acc = tape.add(acc, tape.mul_scalar(s_r, beta));
  return acc;
}

void MetricsAccumulator::add(const Tensor& pred, const Tensor& truth) {
  require(pred.same_shape(truth), "metrics: shape mismatch");
  for (long long i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - truth[i];
    abs_sum_ += std::fabs(err);
    sq_sum_ += err * err;
    ++count_;
    if (std::fabs(truth[i]) > 1e-6) {
      ape_sum_ += std::fabs(err) / std::fabs(truth[i]);
      ++ape_count_;
    } else {
      ++excluded_;
    }
  }
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.count = count_;
  r.mape_excluded = excluded_;
  if (count_ > 0) {
    r.mae = abs_sum_ / static_cast<double>(count_);
    r.rmse = std::sqrt(sq_sum_ / static_cast<double>(count_));
  }
  if (ape_count_ > 0) r.mape = ape_sum_ / static_cast<double>(ape_count_);
  return r;
}

}  // namespace damba
