#pragma once

#include <vector>

#include "damba/tape.hpp"
#include "damba/tensor.hpp"

namespace damba {

struct ObjectiveConfig {
  double alpha = 1.0;   // model-difference weight
  double beta = 0.5;    // representation-difference weight
  double sigma = 1.0;   // exponential kernel width
  double c0 = 0.0;      // cross-Gram normalization; 0 selects L*D automatically
  double w1 = 0.4;      // fusion weight, discriminative branch
  double w2 = 0.6;      // fusion weight, common branch

  void validate() const;
};

// Mean absolute difference.
Var l1_loss(Tape& tape, Var pred, Var truth);
double l1_loss_value(const Tensor& pred, const Tensor& truth);

// exp(-||theta_d - theta_c||_F / (2 sigma^2)) over aligned parameter pairs.
Var model_diff_reg(Tape& tape, const std::vector<Var>& theta_d, const std::vector<Var>& theta_c,
                   double sigma);

// ||R_D^T R_C||_F / c0 on the D x D cross-Gram matrix.
Var repr_diff_reg(Tape& tape, Var r_d, Var r_c, double c0);

// sum_i losses + alpha * s_m + beta * s_r.
Var total_objective(Tape& tape, const std::vector<Var>& losses, Var s_m, Var s_r, double alpha,
                    double beta);

// --- Metrics -------------------------------------------------------------------

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;               // fraction, not percent
  long long mape_excluded = 0;     // entries with |truth| <= 1e-6
  long long count = 0;
};

class MetricsAccumulator {
 public:
  void add(const Tensor& pred, const Tensor& truth);
  MetricsReport report() const;

 private:
  double abs_sum_ = 0.0, sq_sum_ = 0.0, ape_sum_ = 0.0;
  long long count_ = 0, ape_count_ = 0, excluded_ = 0;
};

}  // namespace damba
