#pragma once

#include <memory>
#include <string>
#include <vector>

#include "damba/data.hpp"
#include "damba/delay.hpp"
#include "damba/graph.hpp"
#include "damba/optimizer.hpp"
#include "damba/params.hpp"
#include "damba/rng.hpp"
#include "damba/ssm.hpp"
#include "damba/temporal.hpp"
#include "damba/training.hpp"

namespace damba {

struct ModelConfig {
  int token_dim = 16;   // D
  int state_dim = 8;    // N_s
  int lap_k = 8;        // Laplacian eigenvector count
  int patch_len = 12;   // P
  int patch_stride = 12;
  int history = 48;     // H
  int horizon = 48;     // F
  int in_channels = 3;
  int max_lag = 24;     // 2*P keeps hop offsets in {0,1,2}
  int delay_hidden = 8;
  double w1 = 0.4, w2 = 0.6;
  std::vector<std::string> domain_names;

  int num_domains() const { return static_cast<int>(domain_names.size()); }
  int seq_len() const;  // L = patch count over the history window
  void validate() const;
};

enum class Variant { kSpatial = 0, kTemporal = 1, kDelay = 2 };

// One DASSM variant: per-domain Discrimination Learners, the bidirectional
// Adapter Learner, the shared Commonalities Learner, fusion maps, and the
// per-domain adapter embeddings.
struct VariantBlock {
  std::vector<SsmParams> discrimination;
  std::vector<Param*> adapters;  // (D) each
  SsmParams adapter_fwd, adapter_bwd;
  SsmParams commonalities;
  Param* fuse_w_d = nullptr;
  Param* fuse_b_d = nullptr;
  Param* fuse_w_c = nullptr;
  Param* fuse_b_c = nullptr;
};

// Per-domain static context derived from the dataset: Laplacian features,
// walk paths for the spatial and delay views, and the base delay matrix.
struct DomainStatic {
  std::string name;
  int n_nodes = 0;
  int steps_per_day = 0;
  Tensor phi;  // (N, lap_k), zero-padded when fewer eigenvectors exist
  std::vector<std::vector<int>> spatial_paths;  // N paths of L-2 nodes
  std::vector<std::vector<int>> delay_paths;    // N paths of L-1 nodes
  DelayMatrix tau;
};

DomainStatic build_domain_static(const ModelConfig& cfg, const LoadedDataset& ds,
                                 uint64_t walk_seed);

// One window's model input: normalized patch windows, the raw target, and
// the per-node de-normalization constants for the main channel.
struct WindowInput {
  Tensor patch_inputs;  // (N*L, C_in*P), node-major rows n*L + l
  Tensor target;        // (N, F), raw main channel
  Tensor denorm_scale;  // (N)
  Tensor denorm_shift;  // (N)
  double t_day = 0.0, t_week = 0.0;  // timestamp at the last history step
};

WindowInput build_window_input(const ModelConfig& cfg, const LoadedDataset& ds,
                               int target_start);

// --- Projection algebra ---------------------------------------------------------

// Rank-1 orthogonal projection of each row of r onto span(adapter).
// adapter is a (1,D) row; rows orthogonal to it map to zero.
Var project_onto_adapter(Tape& tape, Var r, Var adapter);
// P with r + P == proj(r, adapter) exactly.
Var prompt_residual(Tape& tape, Var r, Var adapter);

// w1 * Linear(r_d) + w2 * Linear(r_c).
Var fuse_representations(Tape& tape, Var r_d, Var r_c, Var w_d, Var b_d, Var w_c, Var b_c,
                         double w1, double w2);

// Channel concatenation of (y_t + y_d) with the broadcast spatial term.
Var st_fusion(Tape& tape, Var y_t, Var y_d, Var y_s_nodes, int seq_len, int n_nodes);

// Per node: flatten the step-major (L, c) block to one row, apply the linear
// head, then de-normalize rows with the per-node scale and shift.
Var predict_head(Tape& tape, Var z, Var w, Var b, const Tensor& scale, const Tensor& shift,
                 int seq_len, int n_nodes);

struct BatchOutput {
  Var objective;
  std::vector<Var> losses;
  Var s_m, s_r;
  std::vector<Tensor> predictions;  // (N, F) de-normalized
};

class DambaModel {
 public:
  DambaModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  VariantBlock& variant(Variant v) { return blocks_[static_cast<size_t>(v)]; }
  const VariantBlock& variant(Variant v) const { return blocks_[static_cast<size_t>(v)]; }
  const DelayAdjusterValues adjuster_values() const;

  // Forward for one window per listed domain. domain_indices[i] >= 0 routes
  // through that domain's learners; -1 applies the zero-shot policy (mean
  // discrimination parameters, mean adapter). Binds all parameters on the
  // tape. shuffle_rng null means identity adapter permutation (evaluation).
  BatchOutput forward_batch(Tape& tape, const std::vector<const DomainStatic*>& statics,
                            const std::vector<const WindowInput*>& windows,
                            const std::vector<int>& domain_indices, const ObjectiveConfig& obj,
                            Rng* shuffle_rng);

  // Single-window prediction, de-normalized. domain_index -1 = zero-shot.
  Tensor predict_window(const DomainStatic& st, const WindowInput& win, int domain_index);

  int find_domain(const std::string& name) const;  // -1 when unknown

  // Re-seeds each variant's A_cross to the elementwise mean of the domain
  // A matrices. Runs once at construction; callable again after editing the
  // discrimination parameters.
  void init_cross_from_mean();

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::vector<VariantBlock> blocks_;  // spatial, temporal, delay
  Param* spatial_proj_w_ = nullptr;
  Param* spatial_proj_b_ = nullptr;
  Param* patch_w_ = nullptr;
  Param* patch_b_ = nullptr;
  Param* head_w_ = nullptr;
  Param* head_b_ = nullptr;
  Param* adj_w1_ = nullptr;
  Param* adj_b1_ = nullptr;
  Param* adj_w2_ = nullptr;
  Param* adj_b2_ = nullptr;
};

// Ablation: the DASSM stack replaced by one fused selective SSM per variant
// with a single shared adapter token, i.e. plain cross-domain fusion
// training. Views, scans, fusion of views, and the head are identical.
class AblationModel {
 public:
  AblationModel(ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }

  BatchOutput forward_batch(Tape& tape, const std::vector<const DomainStatic*>& statics,
                            const std::vector<const WindowInput*>& windows);
  Tensor predict_window(const DomainStatic& st, const WindowInput& win);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  SsmParams ssm_[3];
  Param* adapter_[3] = {nullptr, nullptr, nullptr};
  Param* lin_w_[3] = {nullptr, nullptr, nullptr};
  Param* lin_b_[3] = {nullptr, nullptr, nullptr};
  Param* spatial_proj_w_ = nullptr;
  Param* spatial_proj_b_ = nullptr;
  Param* patch_w_ = nullptr;
  Param* patch_b_ = nullptr;
  Param* head_w_ = nullptr;
  Param* head_b_ = nullptr;
  Param* adj_w1_ = nullptr;
  Param* adj_b1_ = nullptr;
  Param* adj_w2_ = nullptr;
  Param* adj_b2_ = nullptr;
};

// Zero-shot helpers: elementwise means of trained per-domain parameters.
SsmParamValues mean_ssm_values(const std::vector<SsmParams>& learners);
Tensor mean_adapter_value(const std::vector<Param*>& adapters);

}  // namespace damba
