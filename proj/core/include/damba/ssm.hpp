#pragma once

#include <string>
#include <vector>

#include "damba/params.hpp"
#include "damba/rng.hpp"
#include "damba/tape.hpp"
#include "damba/tensor.hpp"

namespace damba {

// Selective SSM parameters. The state matrix is diagonal with negativity
// enforced through A = -exp(a_log); the per-step B_t, C_t, Delta_t come from
// linear projections of the token. Delta is one value per channel, broadcast
// over the state dimension, so each channel sees its own discretized diagonal.
struct SsmParamValues {
  Tensor a_log;        // (S)
  Tensor w_dt, b_dt;   // (D,D), (D)
  Tensor w_b, b_b;     // (S,D), (S)
  Tensor w_c, b_c;     // (S,D), (S)
  int token_dim() const { return w_dt.dim(0); }
  int state_dim() const { return a_log.dim(0); }
  Tensor a_diag() const;  // -exp(a_log)
};

SsmParamValues random_ssm_values(int token_dim, int state_dim, Rng& rng);

// Store-backed counterpart used by trainable models.
struct SsmParams {
  Param* a_log = nullptr;
  Param* w_dt = nullptr;
  Param* b_dt = nullptr;
  Param* w_b = nullptr;
  Param* b_b = nullptr;
  Param* w_c = nullptr;
  Param* b_c = nullptr;
  int token_dim = 0, state_dim = 0;

  SsmParamValues values() const;
  std::vector<Param*> param_list() const;
};

SsmParams make_ssm_params(ParamStore& store, const std::string& prefix, int token_dim,
                          int state_dim, Rng& rng);

// Bound leaves of an SsmParams on the current tape pass.
struct SsmVars {
  Var a_log, w_dt, b_dt, w_b, b_b, w_c, b_c;
};
SsmVars bind_ssm(const SsmParams& p);
// Leaves built from explicit tensors (e.g. the zero-shot mean parameters).
SsmVars bind_ssm_values(Tape& tape, const SsmParamValues& v, bool requires_grad);

// --- Zero-order-hold discretization -----------------------------------------

struct ZohPair {
  Tensor a_bar;  // exp(delta * A), same shape as a_diag
  Tensor b_bar;  // phi1(delta * A) * delta * B
};

// Diagonal ZOH with a scalar step. delta must be positive.
ZohPair discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta);

// One selective step: per-channel delta (D) broadcast over the state (S).
struct DiscretizedStep {
  Tensor a_bar;  // (D,S)
  Tensor b_bar;  // (D,S)
  Tensor c;      // (S)
};

DiscretizedStep discretize_step(const Tensor& a_diag, const Tensor& b_t, const Tensor& c_t,
                                const Tensor& delta);

// Per-step parameters from token projections, then ZOH per step.
std::vector<DiscretizedStep> selective_params(const Tensor& x, const SsmParamValues& p);

// --- Scans -------------------------------------------------------------------

struct ScanResult {
  Tensor y;       // (L,D)
  Tensor h_last;  // (D,S)
};

ScanResult ssm_scan_sequential(const std::vector<DiscretizedStep>& steps, const Tensor& x,
                               const Tensor& h0);

// Identical output through a Blelloch-style composition tree.
ScanResult ssm_scan_parallel(const std::vector<DiscretizedStep>& steps, const Tensor& x,
                             const Tensor& h0);

// h -> a*h + b with elementwise (D,S) coefficients.
struct ScanElement {
  Tensor a, b;
};
// compose(later, earlier): apply earlier first, then later.
ScanElement compose(const ScanElement& later, const ScanElement& earlier);

// Convolution form, valid for time-invariant parameters only.
Tensor conv_kernel(const DiscretizedStep& step, int length);      // (L,D)
Tensor conv_kernel_apply(const DiscretizedStep& step, const Tensor& x);
// Verifies the steps are time-invariant, then applies the kernel.
Tensor conv_kernel_apply(const std::vector<DiscretizedStep>& steps, const Tensor& x);

// --- Tape-level selective scan ------------------------------------------------

// Batched selective scan on the tape. x is (L*B, D) in step-major layout
// (row t*B + b holds sequence b at step t); returns outputs in the same
// layout. The initial state is zero.
Var selective_scan_batch(Tape& tape, const SsmVars& v, Var x, int L, int B);

namespace detail {
// Test hook for the verify command's negative control: perturbs one
// composition element so the parallel/sequential equivalence check fails.
void set_parallel_scan_corruption(bool enabled);
bool parallel_scan_corruption();
}  // namespace detail

}  // namespace damba
