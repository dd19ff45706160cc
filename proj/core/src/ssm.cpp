#include "damba/ssm.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

namespace {

bool g_corrupt_parallel_scan = false;

double phi1_value(double z) {
  if (std::fabs(z) < 1e-6) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
  return std::expm1(z) / z;
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// y = W x + b with W (out,in)
void matvec(const Tensor& w, const Tensor& b, const double* x, double* y) {
  const int out = w.dim(0), in = w.dim(1);
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const double* wr = w.data() + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

}  // namespace

namespace detail {
void set_parallel_scan_corruption(bool enabled) { g_corrupt_parallel_scan = enabled; }
bool parallel_scan_corruption() { return g_corrupt_parallel_scan; }
}  // namespace detail

Tensor SsmParamValues::a_diag() const {
  Tensor a;
  a.resize_like(a_log);
  for (long long i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
  return a;
}

SsmParamValues random_ssm_values(int token_dim, int state_dim, Rng& rng) {
  SsmParamValues p;
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  auto fill_uniform = [&](Tensor& t) {
    for (long long i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0) * scale;
  };
  p.a_log = Tensor({state_dim});
  for (int s = 0; s < state_dim; ++s) p.a_log[s] = std::log(rng.uniform(0.1, 2.0));
  p.w_dt = Tensor({token_dim, token_dim});
  fill_uniform(p.w_dt);
  p.b_dt = Tensor({token_dim});
  for (int d = 0; d < token_dim; ++d) {
    // softplus(b_dt) lands in [0.01, 0.5], keeping a_bar inside (0,1).
    const double dt0 = std::exp(rng.uniform(std::log(0.01), std::log(0.5)));
    p.b_dt[d] = std::log(std::expm1(dt0));
  }
  p.w_b = Tensor({state_dim, token_dim});
  fill_uniform(p.w_b);
  p.b_b = Tensor({state_dim});
  p.w_c = Tensor({state_dim, token_dim});
  fill_uniform(p.w_c);
  p.b_c = Tensor({state_dim});
  return p;
}

SsmParamValues SsmParams::values() const {
  SsmParamValues v;
  v.a_log = a_log->value;
  v.w_dt = w_dt->value;
  v.b_dt = b_dt->value;
  v.w_b = w_b->value;
  v.b_b = b_b->value;
  v.w_c = w_c->value;
  v.b_c = b_c->value;
  return v;
}

std::vector<Param*> SsmParams::param_list() const {
  return {a_log, w_dt, b_dt, w_b, b_b, w_c, b_c};
}

SsmParams make_ssm_params(ParamStore& store, const std::string& prefix, int token_dim,
                          int state_dim, Rng& rng) {
  SsmParamValues v = random_ssm_values(token_dim, state_dim, rng);
  SsmParams p;
  p.token_dim = token_dim;
  p.state_dim = state_dim;
  p.a_log = &store.create(prefix + ".a_log", std::move(v.a_log));
  p.w_dt = &store.create(prefix + ".w_dt", std::move(v.w_dt));
  p.b_dt = &store.create(prefix + ".b_dt", std::move(v.b_dt));
  p.w_b = &store.create(prefix + ".w_b", std::move(v.w_b));
  p.b_b = &store.create(prefix + ".b_b", std::move(v.b_b));
  p.w_c = &store.create(prefix + ".w_c", std::move(v.w_c));
  p.b_c = &store.create(prefix + ".b_c", std::move(v.b_c));
  return p;
}

SsmVars bind_ssm(const SsmParams& p) {
  return SsmVars{p.a_log->bound, p.w_dt->bound, p.b_dt->bound, p.w_b->bound,
                 p.b_b->bound,  p.w_c->bound,  p.b_c->bound};
}

SsmVars bind_ssm_values(Tape& tape, const SsmParamValues& v, bool requires_grad) {
  return SsmVars{tape.leaf(v.a_log, requires_grad), tape.leaf(v.w_dt, requires_grad),
                 tape.leaf(v.b_dt, requires_grad),  tape.leaf(v.w_b, requires_grad),
                 tape.leaf(v.b_b, requires_grad),   tape.leaf(v.w_c, requires_grad),
                 tape.leaf(v.b_c, requires_grad)};
}

ZohPair discretize_zoh(const Tensor& a_diag, const Tensor& b, double delta) {
  require(delta > 0.0, msg("discretize_zoh: delta must be positive, got ", delta));
  require(a_diag.same_shape(b), "discretize_zoh: A and B shapes disagree");
  ZohPair out;
  out.a_bar.resize_like(a_diag);
  out.b_bar.resize_like(a_diag);
  for (long long i = 0; i < a_diag.size(); ++i) {
    const double z = delta * a_diag[i];
    out.a_bar[i] = std::exp(z);
    out.b_bar[i] = phi1_value(z) * delta * b[i];
  }
  return out;
}

DiscretizedStep discretize_step(const Tensor& a_diag, const Tensor& b_t, const Tensor& c_t,
                                const Tensor& delta) {
  const int s = a_diag.dim(0);
  const int d = delta.dim(0);
  require(b_t.dim(0) == s && c_t.dim(0) == s, "discretize_step: B/C length must match state");
  for (int j = 0; j < d; ++j)
    require(delta[j] > 0.0, msg("discretize_step: delta must be positive, got ", delta[j]));
  DiscretizedStep step;
  step.a_bar = Tensor({d, s});
  step.b_bar = Tensor({d, s});
  step.c = c_t;
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < s; ++k) {
      const double z = delta[j] * a_diag[k];
      step.a_bar.at(j, k) = std::exp(z);
      step.b_bar.at(j, k) = phi1_value(z) * delta[j] * b_t[k];
    }
  return step;
}

std::vector<DiscretizedStep> selective_params(const Tensor& x, const SsmParamValues& p) {
  require(x.rank() == 2 && x.dim(1) == p.token_dim(),
          msg("selective_params: expected (L,", p.token_dim(), ") input, got ", x.shape_str()));
  require(x.all_finite(), "selective_params: non-finite input");
  const int L = x.dim(0), d = p.token_dim(), s = p.state_dim();
  const Tensor a = p.a_diag();
  Tensor dt({d}), bt({s}), ct({s});
  std::vector<DiscretizedStep> steps;
  steps.reserve(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t) {
    const double* xt = x.data() + static_cast<size_t>(t) * d;
    matvec(p.w_dt, p.b_dt, xt, dt.data());
    for (int j = 0; j < d; ++j) dt[j] = stable_softplus(dt[j]);
    matvec(p.w_b, p.b_b, xt, bt.data());
    matvec(p.w_c, p.b_c, xt, ct.data());
    steps.push_back(discretize_step(a, bt, ct, dt));
  }
  return steps;
}

ScanResult ssm_scan_sequential(const std::vector<DiscretizedStep>& steps, const Tensor& x,
                               const Tensor& h0) {
  const int L = x.dim(0), d = x.dim(1);
  require(static_cast<int>(steps.size()) == L,
          msg("scan: ", steps.size(), " steps for ", L, " inputs"));
  const int s = steps.empty() ? h0.dim(1) : steps[0].c.dim(0);
  require(h0.rank() == 2 && h0.dim(0) == d && h0.dim(1) == s,
          msg("scan: h0 must be (", d, ",", s, "), got ", h0.shape_str()));
  ScanResult out;
  out.y = Tensor({L, d});
  out.h_last = h0;
  Tensor& h = out.h_last;
  for (int t = 0; t < L; ++t) {
    const DiscretizedStep& st = steps[static_cast<size_t>(t)];
    for (int j = 0; j < d; ++j) {
      const double xv = x.at(t, j);
      double acc = 0.0;
      for (int k = 0; k < s; ++k) {
        const double hv = st.a_bar.at(j, k) * h.at(j, k) + st.b_bar.at(j, k) * xv;
        h.at(j, k) = hv;
        acc += st.c[k] * hv;
      }
      out.y.at(t, j) = acc;
    }
  }
  return out;
}

ScanElement compose(const ScanElement& later, const ScanElement& earlier) {
  ScanElement out;
  out.a.resize_like(later.a);
  out.b.resize_like(later.b);
  for (long long i = 0; i < later.a.size(); ++i) {
    out.a[i] = later.a[i] * earlier.a[i];
    out.b[i] = later.a[i] * earlier.b[i] + later.b[i];
  }
  return out;
}

ScanResult ssm_scan_parallel(const std::vector<DiscretizedStep>& steps, const Tensor& x,
                             const Tensor& h0) {
  const int L = x.dim(0), d = x.dim(1);
  require(static_cast<int>(steps.size()) == L,
          msg("scan: ", steps.size(), " steps for ", L, " inputs"));
  const int s = steps.empty() ? h0.dim(1) : steps[0].c.dim(0);
  require(h0.rank() == 2 && h0.dim(0) == d && h0.dim(1) == s, "scan: bad h0 shape");

  // Per-step elements (a_t, b_t) with b_t = Bbar_t * x_t broadcast over s.
  std::vector<ScanElement> elems;
  elems.reserve(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t) {
    ScanElement e;
    e.a = steps[static_cast<size_t>(t)].a_bar;
    e.b.resize_like(e.a);
    for (int j = 0; j < d; ++j) {
      const double xv = x.at(t, j);
      for (int k = 0; k < s; ++k) e.b.at(j, k) = steps[static_cast<size_t>(t)].b_bar.at(j, k) * xv;
    }
    elems.push_back(std::move(e));
  }
  if (g_corrupt_parallel_scan && L > 1) elems[1].b[0] += 1e-3;

  int n = 1;
  while (n < L) n <<= 1;
  ScanElement ident;
  ident.a = Tensor::full({d, s}, 1.0);
  ident.b = Tensor({d, s});
  std::vector<ScanElement> tree(static_cast<size_t>(n), ident);
  for (int t = 0; t < L; ++t) tree[static_cast<size_t>(t)] = elems[static_cast<size_t>(t)];

  // Blelloch up-sweep: tree[i] accumulates its subtree in sequence order.
  for (int stride = 1; stride < n; stride <<= 1)
    for (int i = 2 * stride - 1; i < n; i += 2 * stride)
      tree[static_cast<size_t>(i)] =
          compose(tree[static_cast<size_t>(i)], tree[static_cast<size_t>(i - stride)]);

  // Down-sweep turns totals into exclusive prefixes.
  tree[static_cast<size_t>(n - 1)] = ident;
  for (int stride = n >> 1; stride >= 1; stride >>= 1)
    for (int i = 2 * stride - 1; i < n; i += 2 * stride) {
      ScanElement left = tree[static_cast<size_t>(i - stride)];
      tree[static_cast<size_t>(i - stride)] = tree[static_cast<size_t>(i)];
      tree[static_cast<size_t>(i)] = compose(left, tree[static_cast<size_t>(i)]);
    }

  ScanResult out;
  out.y = Tensor({L, d});
  out.h_last = h0;
  for (int t = 0; t < L; ++t) {
    const ScanElement incl = compose(elems[static_cast<size_t>(t)], tree[static_cast<size_t>(t)]);
    const DiscretizedStep& st = steps[static_cast<size_t>(t)];
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < s; ++k) {
        const double hv = incl.a.at(j, k) * h0.at(j, k) + incl.b.at(j, k);
        acc += st.c[k] * hv;
        if (t == L - 1) out.h_last.at(j, k) = hv;
      }
      out.y.at(t, j) = acc;
    }
  }
  if (L == 0) out.h_last = h0;
  return out;
}

Tensor conv_kernel(const DiscretizedStep& step, int length) {
  const int d = step.a_bar.dim(0), s = step.a_bar.dim(1);
  Tensor k({length, d});
  // K[t,j] = sum_k c[k] * a_bar[j,k]^t * b_bar[j,k]
  Tensor pow_a = step.b_bar;  // running a^t * b
  for (int t = 0; t < length; ++t) {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int q = 0; q < s; ++q) acc += step.c[q] * pow_a.at(j, q);
      k.at(t, j) = acc;
    }
    for (int j = 0; j < d; ++j)
      for (int q = 0; q < s; ++q) pow_a.at(j, q) *= step.a_bar.at(j, q);
  }
  return k;
}

Tensor conv_kernel_apply(const DiscretizedStep& step, const Tensor& x) {
  const int L = x.dim(0), d = x.dim(1);
  const Tensor k = conv_kernel(step, L);
  Tensor y({L, d});
  for (int t = 0; t < L; ++t)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int q = 0; q <= t; ++q) acc += k.at(q, j) * x.at(t - q, j);
      y.at(t, j) = acc;
    }
  return y;
}

Tensor conv_kernel_apply(const std::vector<DiscretizedStep>& steps, const Tensor& x) {
  require(!steps.empty(), "conv_kernel_apply: no steps");
  const DiscretizedStep& first = steps[0];
  for (const DiscretizedStep& st : steps) {
    bool same = st.a_bar.same_shape(first.a_bar) && st.b_bar.same_shape(first.b_bar) &&
                st.c.same_shape(first.c);
    if (same)
      for (long long i = 0; same && i < st.a_bar.size(); ++i)
        same = st.a_bar[i] == first.a_bar[i] && st.b_bar[i] == first.b_bar[i];
    if (same)
      for (long long i = 0; same && i < st.c.size(); ++i) same = st.c[i] == first.c[i];
    require(same, "conv_kernel_apply: time-varying parameters");
  }
  return conv_kernel_apply(first, x);
}

Var selective_scan_batch(Tape& tape, const SsmVars& v, Var x, int L, int B) {
  const Tensor& xv = tape.value(x);
  require(xv.rank() == 2 && xv.dim(0) == L * B,
          msg("selective_scan_batch: expected ", L * B, " rows, got ", xv.shape_str()));
  const int d = xv.dim(1);
  const int s = tape.value(v.a_log).dim(0);

  Var a_diag = tape.neg(tape.exp(v.a_log));
  Var dt = tape.softplus(tape.linear(x, v.w_dt, v.b_dt));  // (L*B, D)
  Var bs = tape.linear(x, v.w_b, v.b_b);                   // (L*B, S)
  Var cs = tape.linear(x, v.w_c, v.b_c);                   // (L*B, S)

  Var h = tape.constant(Tensor({B, d, s}));
  std::vector<Var> ys;
  ys.reserve(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t) {
    Var dt_t = tape.slice_rows(dt, t * B, B);
    Var x_t = tape.slice_rows(x, t * B, B);
    Var b_t = tape.slice_rows(bs, t * B, B);
    Var c_t = tape.slice_rows(cs, t * B, B);
    Var da = tape.outer_ds(dt_t, a_diag);
    Var a_bar = tape.exp(da);
    Var b_bar = tape.scale_bs(tape.scale_bd(tape.phi1(da), dt_t), b_t);
    h = tape.add(tape.mul(a_bar, h), tape.scale_bd(b_bar, x_t));
    ys.push_back(tape.contract_s(h, c_t));
  }
  return tape.concat_rows(ys);
}

}  // namespace damba
