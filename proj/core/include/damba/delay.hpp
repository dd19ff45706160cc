#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "damba/graph.hpp"
#include "damba/spatial.hpp"
#include "damba/tape.hpp"
#include "damba/tensor.hpp"

namespace damba {

// Propagation lag that maximizes Pearson correlation between xa shifted
// forward by t and xb, searched over t in [0, max_lag] on the main channel
// (column 0). Ties break toward the smallest lag; a zero-variance overlap
// window disqualifies that lag.
int estimate_delay(const Tensor& xa, const Tensor& xb, int max_lag);

// Integer lags defined only on ordered connected pairs.
struct DelayMatrix {
  int n = 0;
  int max_lag = 0;
  std::map<std::pair<int, int>, int> lags;

  bool defined(int a, int b) const { return lags.count({a, b}) > 0; }
  int lag(int a, int b) const;
};

// Lags for every ordered edge of the graph. series is (T, N, C); estimation
// per edge fans out over threads capped by the DAMBA_THREADS environment
// variable, with results merged in edge-list order.
DelayMatrix build_delay_matrix(const TrafficGraph& g, const Tensor& series, int max_lag);

void save_delay_csv(const DelayMatrix& m, const std::string& path);
DelayMatrix load_delay_csv(const std::string& path, int n, int max_lag);

// Time-of-day in [0,1) and day-of-week in {0..6}/7 for every step.
struct TimestampFeatures {
  Tensor t_day;   // (T)
  Tensor t_week;  // (T)
};
TimestampFeatures timestamp_features(int total_steps, int steps_per_day, int start_step = 0);

// Two-layer perceptron mapping a (t_day, t_week) pair to a scalar lag offset.
struct DelayAdjusterValues {
  Tensor w1, b1;  // (H,2), (H)
  Tensor w2, b2;  // (1,H), (1)
};
DelayAdjusterValues random_delay_adjuster(int hidden, Rng& rng);

// Raw (pre-rounding) offset for one timestamp.
double adjuster_offset(const DelayAdjusterValues& adj, double t_day, double t_week);

// Taped version used where the offset participates in a differentiable loss;
// rounding is exposed separately through Tape::round_ste.
Var adjuster_offset_var(Tape& tape, Var w1, Var b1, Var w2, Var b2, double t_day, double t_week);

// Base lags plus the rounded offset, clipped to [0, max_lag].
DelayMatrix adjust_delay(const DelayMatrix& base, const DelayAdjusterValues& adj, double t_day,
                         double t_week);

// Index sequence for one delay propagation path: starts at (start_patch,
// path[0]), each hop advances the patch index by floor(lag/P). Exactly L
// positions: L-1 patch slots (truncated or padded by repeating the last
// reachable patch) and the adapter last. Token table layout is
// [node 0 patches.. node N-1 patches; adapter row], row = node*patches + patch.
struct DelaySequenceIndex {
  std::vector<int> token_index;
  std::vector<TokenOrigin> origin;
};
DelaySequenceIndex st_delay_scan_indices(const std::vector<int>& path, int start_patch,
                                         int seq_len, int patch_len, int patches_per_node,
                                         const DelayMatrix& tau_eff);

// Value-level sequence over a patch grid (Lp, N, D).
ScanSequence st_delay_scan(const Tensor& patches, const std::vector<int>& path, int start_patch,
                           int seq_len, int patch_len, const DelayMatrix& tau_eff,
                           const Tensor& adapter);

}  // namespace damba
