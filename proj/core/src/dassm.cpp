#include "damba/dassm.hpp"

#include <cmath>

#include "damba/error.hpp"
#include "damba/spatial.hpp"

namespace damba {

int ModelConfig::seq_len() const { return patch_count(history, patch_len, patch_stride); }

void ModelConfig::validate() const {
  require(token_dim >= 1 && state_dim >= 1, "model: token and state dims must be >= 1");
  require(lap_k >= 1, "model: lap_k must be >= 1");
  require(patch_len >= patch_stride && patch_stride >= 1, "model: need P >= S >= 1");
  require(history >= patch_len, "model: history must cover at least one patch");
  require(horizon >= 1, "model: horizon must be >= 1");
  require(in_channels >= 3, "model: expects flow + time-of-day + day-of-week channels");
  require(max_lag >= 0, "model: max_lag must be >= 0");
  require(delay_hidden >= 1, "model: delay_hidden must be >= 1");
  require(w1 > 0.0 && w2 > 0.0, "model: fusion weights must be > 0");
  require(num_domains() >= 1, "model: at least one training domain required");
  require(seq_len() >= 3, msg("model: sequence length ", seq_len(),
                              " too short; need >= 3 patches over the history window"));
}

DomainStatic build_domain_static(const ModelConfig& cfg, const LoadedDataset& ds,
                                 uint64_t walk_seed) {
  DomainStatic st;
  st.name = ds.name;
  st.n_nodes = ds.graph.n;
  st.steps_per_day = ds.steps_per_day;
  const int n = ds.graph.n;
  const int L = cfg.seq_len();

  Tensor phi_raw = laplacian_positional_encoding(ds.graph, cfg.lap_k);
  st.phi = Tensor({n, cfg.lap_k});  // zero-padded when the graph has fewer modes
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < std::min(cfg.lap_k, phi_raw.dim(1)); ++j)
      st.phi.at(i, j) = phi_raw.at(i, j);

  Rng rng(walk_seed);
  Rng spatial_rng = rng.fork(0x73);
  Rng delay_rng = rng.fork(0x64);
  if (L - 2 >= 1)
    st.spatial_paths = random_walk_paths(ds.graph, L - 2, spatial_rng);
  else
    st.spatial_paths.assign(static_cast<size_t>(n), {});
  st.delay_paths = random_walk_paths(ds.graph, L - 1, delay_rng);
  st.tau = build_delay_matrix(ds.graph, ds.series, cfg.max_lag);
  return st;
}

WindowInput build_window_input(const ModelConfig& cfg, const LoadedDataset& ds,
                               int target_start) {
  const int t_total = ds.series.dim(0);
  const int n = ds.series.dim(1);
  const int c = ds.series.dim(2);
  require(c == cfg.in_channels,
          msg("window: dataset has ", c, " channels, model expects ", cfg.in_channels));
  const int h = cfg.history, f = cfg.horizon;
  require(target_start >= h && target_start + f <= t_total,
          msg("window: target start ", target_start, " out of range"));
  const int L = cfg.seq_len();
  const int t0 = target_start - h;

  WindowInput win;
  win.patch_inputs = Tensor({n * L, c * cfg.patch_len});
  win.target = Tensor({n, f});
  win.denorm_scale = Tensor({n});
  win.denorm_shift = Tensor({n});
  Tensor hist({h, c});
  for (int v = 0; v < n; ++v) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < c; ++j) hist.at(i, j) = ds.series.at(t0 + i, v, j);
    auto [norm, state] = revin_normalize(hist);
    const Tensor windows = patch_windows(norm, cfg.patch_len, cfg.patch_stride);
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < windows.dim(1); ++j) win.patch_inputs.at(v * L + l, j) = windows.at(l, j);
    win.denorm_scale[v] = state.std[0];
    win.denorm_shift[v] = state.mean[0];
    for (int i = 0; i < f; ++i) win.target.at(v, i) = ds.series.at(target_start + i, v, 0);
  }
  win.t_day = ds.series.at(target_start - 1, 0, 1);
  win.t_week = ds.series.at(target_start - 1, 0, 2);
  return win;
}

Var project_onto_adapter(Tape& tape, Var r, Var adapter) {
  const Tensor& av = tape.value(adapter);
  require(av.rank() == 2 && av.dim(0) == 1, "projection: adapter must be a (1,D) row");
  Var nrm2 = tape.sum(tape.mul(adapter, adapter));
  require(tape.scalar_value(nrm2) > 1e-16, "projection: adapter norm below 1e-8, degenerate subspace");
  Var coef = tape.div_by_scalar(tape.matmul_nt(r, adapter), nrm2);  // (m,1)
  return tape.matmul(coef, adapter);
}

Var prompt_residual(Tape& tape, Var r, Var adapter) {
  return tape.sub(project_onto_adapter(tape, r, adapter), r);
}

Var fuse_representations(Tape& tape, Var r_d, Var r_c, Var w_d, Var b_d, Var w_c, Var b_c,
                         double w1, double w2) {
  Var yd = tape.mul_scalar(tape.linear(r_d, w_d, b_d), w1);
  Var yc = tape.mul_scalar(tape.linear(r_c, w_c, b_c), w2);
  return tape.add(yd, yc);
}

namespace {

std::vector<int> broadcast_index(int seq_len, int n) {
  std::vector<int> idx(static_cast<size_t>(seq_len) * n);
  for (int p = 0; p < seq_len; ++p)
    for (int v = 0; v < n; ++v) idx[static_cast<size_t>(p) * n + v] = v;
  return idx;
}

}  // namespace

Var st_fusion(Tape& tape, Var y_t, Var y_d, Var y_s_nodes, int seq_len, int n_nodes) {
  const Tensor& vt = tape.value(y_t);
  require(vt.same_shape(tape.value(y_d)), "st_fusion: temporal and delay shapes differ");
  require(vt.rank() == 2 && vt.dim(0) == seq_len * n_nodes, "st_fusion: bad temporal layout");
  require(tape.value(y_s_nodes).dim(0) == n_nodes, "st_fusion: node-aligned spatial term required");
  Var spatial = tape.gather_rows(y_s_nodes, broadcast_index(seq_len, n_nodes));
  return tape.concat_cols(tape.add(y_t, y_d), spatial);
}

// ---------------------------------------------------------------------------

namespace {

// Gather plan for one domain and variant. Sequences are step-major: row
// p*batch + b holds sequence b at position p.
struct ViewBatch {
  std::vector<int> gather;
  int batch = 0;
  std::vector<int> scatter_slots;  // delay only, for the first (L-1)*batch rows
};

ViewBatch build_temporal_view(int n, int seq_len) {
  ViewBatch vb;
  vb.batch = n;
  vb.gather.resize(static_cast<size_t>(seq_len) * n);
  const int adapter_row = n * seq_len;
  for (int p = 0; p < seq_len; ++p)
    for (int v = 0; v < n; ++v)
      vb.gather[static_cast<size_t>(p) * n + v] =
          p < seq_len - 1 ? v * seq_len + p : adapter_row;
  return vb;
}

ViewBatch build_spatial_view(const DomainStatic& st, int seq_len) {
  const int n = st.n_nodes;
  ViewBatch vb;
  vb.batch = 2 * n;
  vb.gather.resize(static_cast<size_t>(seq_len) * vb.batch);
  for (int v = 0; v < n; ++v) {
    const std::vector<int> fwd = spatial_sequence_indices(st.spatial_paths[static_cast<size_t>(v)], n, false);
    const std::vector<int> bwd = spatial_sequence_indices(st.spatial_paths[static_cast<size_t>(v)], n, true);
    require(static_cast<int>(fwd.size()) == seq_len, "spatial path length mismatch");
    for (int p = 0; p < seq_len; ++p) {
      vb.gather[static_cast<size_t>(p) * vb.batch + v] = fwd[static_cast<size_t>(p)];
      vb.gather[static_cast<size_t>(p) * vb.batch + n + v] = bwd[static_cast<size_t>(p)];
    }
  }
  return vb;
}

ViewBatch build_delay_view(const DomainStatic& st, const DelayMatrix& tau_eff, int seq_len,
                           int patch_len) {
  const int n = st.n_nodes;
  const int starts = seq_len;  // every patch index is a valid start
  ViewBatch vb;
  vb.batch = n * starts;
  vb.gather.resize(static_cast<size_t>(seq_len) * vb.batch);
  vb.scatter_slots.resize(static_cast<size_t>(seq_len - 1) * vb.batch);
  for (int s = 0; s < starts; ++s)
    for (int v = 0; v < n; ++v) {
      const DelaySequenceIndex seq = st_delay_scan_indices(
          st.delay_paths[static_cast<size_t>(v)], s, seq_len, patch_len, seq_len, tau_eff);
      const int b = s * n + v;
      for (int p = 0; p < seq_len; ++p) {
        vb.gather[static_cast<size_t>(p) * vb.batch + b] = seq.token_index[static_cast<size_t>(p)];
        if (p < seq_len - 1) {
          const TokenOrigin& o = seq.origin[static_cast<size_t>(p)];
          vb.scatter_slots[static_cast<size_t>(p) * vb.batch + b] = o.patch * n + o.node;
        }
      }
    }
  return vb;
}

// Mean over rows: (B,D) -> (1,D).
Var row_mean(Tape& tape, Var rows) {
  const int b = tape.value(rows).dim(0);
  Tensor ones({1, b});
  ones.fill(1.0 / b);
  return tape.matmul(tape.constant(std::move(ones)), rows);
}

// Sum forward and reverse-aligned backward outputs: (L*2N, D) -> (L*N, D).
Var spatial_align_sum(Tape& tape, Var y, int seq_len, int n) {
  std::vector<int> idx_f(static_cast<size_t>(seq_len) * n);
  std::vector<int> idx_b(static_cast<size_t>(seq_len) * n);
  for (int p = 0; p < seq_len; ++p)
    for (int v = 0; v < n; ++v) {
      idx_f[static_cast<size_t>(p) * n + v] = p * 2 * n + v;
      idx_b[static_cast<size_t>(p) * n + v] = (seq_len - 1 - p) * 2 * n + n + v;
    }
  return tape.add(tape.gather_rows(y, idx_f), tape.gather_rows(y, idx_b));
}

// (L*N, c) step-major -> (N, L*c) node-major.
Var node_major_flatten(Tape& tape, Var z, int seq_len, int n) {
  std::vector<int> idx(static_cast<size_t>(seq_len) * n);
  for (int v = 0; v < n; ++v)
    for (int p = 0; p < seq_len; ++p) idx[static_cast<size_t>(v) * seq_len + p] = p * n + v;
  Var g = tape.gather_rows(z, idx);
  const int cols = tape.value(z).dim(1);
  return tape.reshape(g, {n, seq_len * cols});
}

struct VariantPass {
  Var r_d;
  Var candidate;  // (1,D)
  ViewBatch view;
};

}  // namespace

Var predict_head(Tape& tape, Var z, Var w, Var b, const Tensor& scale, const Tensor& shift,
                 int seq_len, int n_nodes) {
  Var flat = node_major_flatten(tape, z, seq_len, n_nodes);
  Var pred_norm = tape.linear(flat, w, b);
  return tape.affine_rows(pred_norm, scale, shift);
}

// ---------------------------------------------------------------------------

DambaModel::DambaModel(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const int d = cfg_.token_dim;
  const int m = cfg_.num_domains();
  const int L = cfg_.seq_len();

  const char* tags[3] = {"spatial", "temporal", "delay"};
  blocks_.resize(3);
  for (int v = 0; v < 3; ++v) {
    VariantBlock& b = blocks_[static_cast<size_t>(v)];
    Rng vrng = rng.fork(100 + static_cast<uint64_t>(v));
    for (int i = 0; i < m; ++i) {
      b.discrimination.push_back(make_ssm_params(
          store_, msg(tags[v], ".disc", i), d, cfg_.state_dim, vrng));
      Tensor emb({d});
      for (int j = 0; j < d; ++j) emb[j] = vrng.uniform(-0.5, 0.5);
      b.adapters.push_back(&store_.create(msg(tags[v], ".adapter", i), std::move(emb)));
    }
    b.adapter_fwd = make_ssm_params(store_, msg(tags[v], ".adapter_fwd"), d, cfg_.state_dim, vrng);
    b.adapter_bwd = make_ssm_params(store_, msg(tags[v], ".adapter_bwd"), d, cfg_.state_dim, vrng);
    b.commonalities = make_ssm_params(store_, msg(tags[v], ".common"), d, cfg_.state_dim, vrng);
    auto dense = [&](const std::string& name, int rows, int cols) {
      Tensor w({rows, cols});
      const double s = 1.0 / std::sqrt(static_cast<double>(cols));
      for (long long i = 0; i < w.size(); ++i) w[i] = vrng.uniform(-1.0, 1.0) * s;
      return &store_.create(name, std::move(w));
    };
    b.fuse_w_d = dense(msg(tags[v], ".fuse_d.w"), d, d);
    b.fuse_b_d = &store_.create(msg(tags[v], ".fuse_d.b"), Tensor({d}));
    b.fuse_w_c = dense(msg(tags[v], ".fuse_c.w"), d, d);
    b.fuse_b_c = &store_.create(msg(tags[v], ".fuse_c.b"), Tensor({d}));
  }

  Rng grng = rng.fork(7);
  auto dense = [&](const std::string& name, int rows, int cols) {
    Tensor w({rows, cols});
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (long long i = 0; i < w.size(); ++i) w[i] = grng.uniform(-1.0, 1.0) * s;
    return &store_.create(name, std::move(w));
  };
  spatial_proj_w_ = dense("spatial.proj.w", d, cfg_.lap_k);
  spatial_proj_b_ = &store_.create("spatial.proj.b", Tensor({d}));
  patch_w_ = dense("patch.w", d, cfg_.in_channels * cfg_.patch_len);
  patch_b_ = &store_.create("patch.b", Tensor({d}));
  head_w_ = dense("head.w", cfg_.horizon, L * 2 * d);
  head_b_ = &store_.create("head.b", Tensor({cfg_.horizon}));

  DelayAdjusterValues adj = random_delay_adjuster(cfg_.delay_hidden, grng);
  adj_w1_ = &store_.create("delay_adjuster.w1", std::move(adj.w1));
  adj_b1_ = &store_.create("delay_adjuster.b1", std::move(adj.b1));
  adj_w2_ = &store_.create("delay_adjuster.w2", std::move(adj.w2));
  adj_b2_ = &store_.create("delay_adjuster.b2", std::move(adj.b2));

  init_cross_from_mean();
}

void DambaModel::init_cross_from_mean() {
  // A_cross starts as the elementwise mean of the domain A matrices; since
  // A = -exp(a_log) the stored value is log of the mean of exp(a_log_i).
  for (auto& b : blocks_) {
    Tensor& target = b.commonalities.a_log->value;
    Tensor acc;
    acc.resize_like(target);
    acc.fill(0.0);
    for (const SsmParams& dl : b.discrimination)
      for (long long i = 0; i < acc.size(); ++i) acc[i] += std::exp(dl.a_log->value[i]);
    for (long long i = 0; i < acc.size(); ++i)
      target[i] = std::log(acc[i] / static_cast<double>(b.discrimination.size()));
  }
}

const DelayAdjusterValues DambaModel::adjuster_values() const {
  DelayAdjusterValues adj;
  adj.w1 = adj_w1_->value;
  adj.b1 = adj_b1_->value;
  adj.w2 = adj_w2_->value;
  adj.b2 = adj_b2_->value;
  return adj;
}

int DambaModel::find_domain(const std::string& name) const {
  for (int i = 0; i < cfg_.num_domains(); ++i)
    if (cfg_.domain_names[static_cast<size_t>(i)] == name) return i;
  return -1;
}

SsmParamValues mean_ssm_values(const std::vector<SsmParams>& learners) {
  require(!learners.empty(), "mean_ssm_values: no learners");
  SsmParamValues acc = learners[0].values();
  auto add_into = [](Tensor& dst, const Tensor& src) {
    for (long long i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  for (size_t k = 1; k < learners.size(); ++k) {
    SsmParamValues v = learners[k].values();
    add_into(acc.a_log, v.a_log);
    add_into(acc.w_dt, v.w_dt);
    add_into(acc.b_dt, v.b_dt);
    add_into(acc.w_b, v.w_b);
    add_into(acc.b_b, v.b_b);
    add_into(acc.w_c, v.w_c);
    add_into(acc.b_c, v.b_c);
  }
  const double inv = 1.0 / static_cast<double>(learners.size());
  for (Tensor* t : {&acc.a_log, &acc.w_dt, &acc.b_dt, &acc.w_b, &acc.b_b, &acc.w_c, &acc.b_c})
    for (long long i = 0; i < t->size(); ++i) (*t)[i] *= inv;
  return acc;
}

Tensor mean_adapter_value(const std::vector<Param*>& adapters) {
  require(!adapters.empty(), "mean_adapter_value: no adapters");
  Tensor acc;
  acc.resize_like(adapters[0]->value);
  acc.fill(0.0);
  for (const Param* p : adapters)
    for (long long i = 0; i < acc.size(); ++i) acc[i] += p->value[i];
  for (long long i = 0; i < acc.size(); ++i) acc[i] /= static_cast<double>(adapters.size());
  return acc;
}

BatchOutput DambaModel::forward_batch(Tape& tape, const std::vector<const DomainStatic*>& statics,
                                      const std::vector<const WindowInput*>& windows,
                                      const std::vector<int>& domain_indices,
                                      const ObjectiveConfig& obj, Rng* shuffle_rng) {
  const size_t m_batch = statics.size();
  require(m_batch >= 1 && windows.size() == m_batch && domain_indices.size() == m_batch,
          "forward_batch: inconsistent batch");
  for (int idx : domain_indices)
    require(idx >= -1 && idx < cfg_.num_domains(),
            msg("forward_batch: unknown domain index ", idx));
  obj.validate();

  store_.bind_all(tape);
  const int L = cfg_.seq_len();
  const int d = cfg_.token_dim;

  struct DomainPass {
    Var tokens;        // (N*L, D)
    Var node_reps;     // (N, D)
    SsmVars disc[3];
    Var adapter_row[3];  // (1,D)
    VariantPass pass[3];
  };
  std::vector<DomainPass> dp(m_batch);

  // Phase A: views and discrimination per domain.
  for (size_t di = 0; di < m_batch; ++di) {
    const DomainStatic& st = *statics[di];
    const WindowInput& win = *windows[di];
    const int domain = domain_indices[di];
    const int n = st.n_nodes;
    DomainPass& p = dp[di];

    p.tokens = tape.linear(tape.constant(win.patch_inputs), patch_w_->bound, patch_b_->bound);
    p.node_reps = tape.linear(tape.constant(st.phi), spatial_proj_w_->bound, spatial_proj_b_->bound);

    const DelayMatrix tau_eff = adjust_delay(st.tau, adjuster_values(), win.t_day, win.t_week);
    p.pass[0].view = build_spatial_view(st, L);
    p.pass[1].view = build_temporal_view(n, L);
    p.pass[2].view = build_delay_view(st, tau_eff, L, cfg_.patch_len);

    for (int v = 0; v < 3; ++v) {
      VariantBlock& blk = blocks_[static_cast<size_t>(v)];
      if (domain >= 0) {
        p.disc[v] = bind_ssm(blk.discrimination[static_cast<size_t>(domain)]);
        p.adapter_row[v] =
            tape.reshape(blk.adapters[static_cast<size_t>(domain)]->bound, {1, d});
      } else {
        // Zero-shot policy: mean discrimination parameters, mean adapter.
        p.disc[v] = bind_ssm_values(tape, mean_ssm_values(blk.discrimination), false);
        p.adapter_row[v] =
            tape.constant(mean_adapter_value(blk.adapters).reshaped({1, d}));
      }
      Var table = v == 0 ? tape.concat_rows({p.node_reps, p.adapter_row[v]})
                         : tape.concat_rows({p.tokens, p.adapter_row[v]});
      Var seq = tape.gather_rows(table, p.pass[v].view.gather);
      p.pass[v].r_d = selective_scan_batch(tape, p.disc[v], seq, L, p.pass[v].view.batch);
      Var final_rows = tape.slice_rows(p.pass[v].r_d, (L - 1) * p.pass[v].view.batch,
                                       p.pass[v].view.batch);
      p.pass[v].candidate = row_mean(tape, final_rows);
    }
  }

  // Phase B: adapter communication per variant across the batch.
  std::vector<std::vector<Var>> refreshed(3);  // [variant][domain] (1,D)
  for (int v = 0; v < 3; ++v) {
    VariantBlock& blk = blocks_[static_cast<size_t>(v)];
    std::vector<Var> cands;
    cands.reserve(m_batch);
    for (size_t di = 0; di < m_batch; ++di) cands.push_back(dp[di].pass[v].candidate);
    Var stacked = tape.concat_rows(cands);  // (M,D)

    std::vector<int> perm(m_batch);
    for (size_t i = 0; i < m_batch; ++i) perm[i] = static_cast<int>(i);
    if (shuffle_rng != nullptr)
      for (size_t i = m_batch; i > 1; --i) {
        const size_t j = static_cast<size_t>(shuffle_rng->next_below(i));
        std::swap(perm[i - 1], perm[j]);
      }
    std::vector<int> inv(m_batch);
    for (size_t i = 0; i < m_batch; ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);

    Var shuffled = tape.gather_rows(stacked, perm);
    const int mi = static_cast<int>(m_batch);
    Var fwd = selective_scan_batch(tape, bind_ssm(blk.adapter_fwd), shuffled, mi, 1);
    std::vector<int> rev(m_batch);
    for (size_t i = 0; i < m_batch; ++i) rev[i] = mi - 1 - static_cast<int>(i);
    Var bwd_in = tape.gather_rows(shuffled, rev);
    Var bwd_rev = selective_scan_batch(tape, bind_ssm(blk.adapter_bwd), bwd_in, mi, 1);
    Var bwd = tape.gather_rows(bwd_rev, rev);
    Var hat_shuffled = tape.add(fwd, bwd);
    Var hat = tape.gather_rows(hat_shuffled, inv);
    for (size_t di = 0; di < m_batch; ++di)
      refreshed[static_cast<size_t>(v)].push_back(tape.slice_rows(hat, static_cast<int>(di), 1));
  }

  // Phases C and D: projection, commonalities, fusion, head, loss.
  BatchOutput out;
  std::vector<Var> s_r_terms;
  for (size_t di = 0; di < m_batch; ++di) {
    const DomainStatic& st = *statics[di];
    const WindowInput& win = *windows[di];
    const int n = st.n_nodes;
    DomainPass& p = dp[di];

    Var y_variant[3];
    Var rd_temporal, rc_temporal;
    for (int v = 0; v < 3; ++v) {
      VariantBlock& blk = blocks_[static_cast<size_t>(v)];
      Var that = refreshed[static_cast<size_t>(v)][di];
      Var r_d = p.pass[v].r_d;
      Var proj = project_onto_adapter(tape, r_d, that);
      Var r_c = selective_scan_batch(tape, bind_ssm(blk.commonalities), proj, L,
                                     p.pass[v].view.batch);
      Var y = fuse_representations(tape, r_d, r_c, blk.fuse_w_d->bound, blk.fuse_b_d->bound,
                                   blk.fuse_w_c->bound, blk.fuse_b_c->bound, obj.w1, obj.w2);
      if (v == 1) {
        rd_temporal = r_d;
        rc_temporal = r_c;
      }
      y_variant[v] = y;
    }

    // Variant alignment: spatial summed bidirectionally and read at the
    // first interior position; delay outputs scattered back to their
    // (patch, node) slots.
    Var spatial_sum = spatial_align_sum(tape, y_variant[0], L, n);
    Var y_s_nodes = tape.slice_rows(spatial_sum, n, n);
    Var y_t = y_variant[1];
    Var y_d_rows = tape.slice_rows(y_variant[2], 0, (L - 1) * dp[di].pass[2].view.batch);
    Var y_d = tape.scatter_mean_rows(y_d_rows, p.pass[2].view.scatter_slots, L * n);

    Var z = st_fusion(tape, y_t, y_d, y_s_nodes, L, n);
    Var pred = predict_head(tape, z, head_w_->bound, head_b_->bound, win.denorm_scale,
                            win.denorm_shift, L, n);
    out.losses.push_back(l1_loss(tape, pred, tape.constant(win.target)));
    out.predictions.push_back(tape.value(pred));

    if (domain_indices[di] >= 0) {
      const double c0 = obj.c0 > 0.0 ? obj.c0 : static_cast<double>(L) * d;
      s_r_terms.push_back(repr_diff_reg(tape, rd_temporal, rc_temporal, c0));
    }
  }

  // Regularizers on the temporal variant, averaged over trained domains.
  std::vector<Var> s_m_terms;
  for (size_t di = 0; di < m_batch; ++di) {
    const int domain = domain_indices[di];
    if (domain < 0) continue;
    VariantBlock& blk = blocks_[1];
    const SsmParams& dl = blk.discrimination[static_cast<size_t>(domain)];
    std::vector<Var> theta_d, theta_c;
    for (Param* q : dl.param_list()) theta_d.push_back(q->bound);
    for (Param* q : blk.commonalities.param_list()) theta_c.push_back(q->bound);
    s_m_terms.push_back(model_diff_reg(tape, theta_d, theta_c, obj.sigma));
  }
  auto average = [&](const std::vector<Var>& terms, double empty_value) {
    if (terms.empty()) return tape.constant_scalar(empty_value);
    Var acc = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return tape.mul_scalar(acc, 1.0 / static_cast<double>(terms.size()));
  };
  out.s_m = average(s_m_terms, 1.0);
  out.s_r = average(s_r_terms, 0.0);
  out.objective = total_objective(tape, out.losses, out.s_m, out.s_r, obj.alpha, obj.beta);
  return out;
}

Tensor DambaModel::predict_window(const DomainStatic& st, const WindowInput& win,
                                  int domain_index) {
  Tape tape;
  ObjectiveConfig obj;
  obj.w1 = cfg_.w1;
  obj.w2 = cfg_.w2;
  BatchOutput out = forward_batch(tape, {&st}, {&win}, {domain_index}, obj, nullptr);
  return out.predictions[0];
}

// ---------------------------------------------------------------------------

AblationModel::AblationModel(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const int d = cfg_.token_dim;
  const int L = cfg_.seq_len();
  const char* tags[3] = {"spatial", "temporal", "delay"};
  for (int v = 0; v < 3; ++v) {
    Rng vrng = rng.fork(100 + static_cast<uint64_t>(v));
    ssm_[v] = make_ssm_params(store_, msg(tags[v], ".ssm"), d, cfg_.state_dim, vrng);
    Tensor emb({d});
    for (int j = 0; j < d; ++j) emb[j] = vrng.uniform(-0.5, 0.5);
    adapter_[v] = &store_.create(msg(tags[v], ".adapter"), std::move(emb));
    Tensor w({d, d});
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (long long i = 0; i < w.size(); ++i) w[i] = vrng.uniform(-1.0, 1.0) * s;
    lin_w_[v] = &store_.create(msg(tags[v], ".lin.w"), std::move(w));
    lin_b_[v] = &store_.create(msg(tags[v], ".lin.b"), Tensor({d}));
  }
  Rng grng = rng.fork(7);
  auto dense = [&](const std::string& name, int rows, int cols) {
    Tensor w({rows, cols});
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (long long i = 0; i < w.size(); ++i) w[i] = grng.uniform(-1.0, 1.0) * s;
    return &store_.create(name, std::move(w));
  };
  spatial_proj_w_ = dense("spatial.proj.w", d, cfg_.lap_k);
  spatial_proj_b_ = &store_.create("spatial.proj.b", Tensor({d}));
  patch_w_ = dense("patch.w", d, cfg_.in_channels * cfg_.patch_len);
  patch_b_ = &store_.create("patch.b", Tensor({d}));
  head_w_ = dense("head.w", cfg_.horizon, L * 2 * d);
  head_b_ = &store_.create("head.b", Tensor({cfg_.horizon}));
  DelayAdjusterValues adj = random_delay_adjuster(cfg_.delay_hidden, grng);
  adj_w1_ = &store_.create("delay_adjuster.w1", std::move(adj.w1));
  adj_b1_ = &store_.create("delay_adjuster.b1", std::move(adj.b1));
  adj_w2_ = &store_.create("delay_adjuster.w2", std::move(adj.w2));
  adj_b2_ = &store_.create("delay_adjuster.b2", std::move(adj.b2));
}

BatchOutput AblationModel::forward_batch(Tape& tape,
                                         const std::vector<const DomainStatic*>& statics,
                                         const std::vector<const WindowInput*>& windows) {
  const size_t m_batch = statics.size();
  require(m_batch >= 1 && windows.size() == m_batch, "forward_batch: inconsistent batch");
  store_.bind_all(tape);
  const int L = cfg_.seq_len();
  const int d = cfg_.token_dim;

  BatchOutput out;
  for (size_t di = 0; di < m_batch; ++di) {
    const DomainStatic& st = *statics[di];
    const WindowInput& win = *windows[di];
    const int n = st.n_nodes;

    Var tokens = tape.linear(tape.constant(win.patch_inputs), patch_w_->bound, patch_b_->bound);
    Var node_reps =
        tape.linear(tape.constant(st.phi), spatial_proj_w_->bound, spatial_proj_b_->bound);
    DelayAdjusterValues adj;
    adj.w1 = adj_w1_->value;
    adj.b1 = adj_b1_->value;
    adj.w2 = adj_w2_->value;
    adj.b2 = adj_b2_->value;
    const DelayMatrix tau_eff = adjust_delay(st.tau, adj, win.t_day, win.t_week);

    ViewBatch views[3];
    views[0] = build_spatial_view(st, L);
    views[1] = build_temporal_view(n, L);
    views[2] = build_delay_view(st, tau_eff, L, cfg_.patch_len);

    Var y_variant[3];
    for (int v = 0; v < 3; ++v) {
      Var adapter_row = tape.reshape(adapter_[v]->bound, {1, d});
      Var table = v == 0 ? tape.concat_rows({node_reps, adapter_row})
                         : tape.concat_rows({tokens, adapter_row});
      Var seq = tape.gather_rows(table, views[v].gather);
      Var rep = selective_scan_batch(tape, bind_ssm(ssm_[v]), seq, L, views[v].batch);
      y_variant[v] = tape.linear(rep, lin_w_[v]->bound, lin_b_[v]->bound);
    }

    Var spatial_sum = spatial_align_sum(tape, y_variant[0], L, n);
    Var y_s_nodes = tape.slice_rows(spatial_sum, n, n);
    Var y_d_rows = tape.slice_rows(y_variant[2], 0, (L - 1) * views[2].batch);
    Var y_d = tape.scatter_mean_rows(y_d_rows, views[2].scatter_slots, L * n);

    Var z = st_fusion(tape, y_variant[1], y_d, y_s_nodes, L, n);
    Var pred = predict_head(tape, z, head_w_->bound, head_b_->bound, win.denorm_scale,
                            win.denorm_shift, L, n);
    out.losses.push_back(l1_loss(tape, pred, tape.constant(win.target)));
    out.predictions.push_back(tape.value(pred));
  }
  out.s_m = tape.constant_scalar(1.0);
  out.s_r = tape.constant_scalar(0.0);
  out.objective = total_objective(tape, out.losses, out.s_m, out.s_r, 0.0, 0.0);
  return out;
}

Tensor AblationModel::predict_window(const DomainStatic& st, const WindowInput& win) {
  Tape tape;
  BatchOutput out = forward_batch(tape, {&st}, {&win});
  return out.predictions[0];
}

}  // namespace damba
