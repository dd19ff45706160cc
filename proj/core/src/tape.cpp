#include "damba/tape.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

namespace {

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// phi1(z) = (exp(z) - 1) / z, the ZOH input-matrix factor.
double phi1_value(double z) {
  if (std::fabs(z) < 1e-6) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
  return std::expm1(z) / z;
}

// d/dz phi1(z) = (exp(z)(z - 1) + 1) / z^2; series branch avoids cancellation.
double phi1_prime(double z) {
  if (std::fabs(z) < 1e-3)
    return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

// C (m,n) += A (m,k) * B (k,n)
void mm_acc(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m,n) += A (m,k) * B^T with B (n,k)
void mm_nt_acc(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C (k,n) += A^T with A (m,k), times B (m,n)
void mm_tn_acc(double* c, const double* a, const double* b, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }

Tape::Node& Tape::fresh() {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[used_];
  n.op = Op::kLeaf;
  n.requires_grad = false;
  n.a = n.b = -1;
  n.i0 = n.i1 = 0;
  n.c0 = 0.0;
  n.idx.clear();
  n.extra.clear();
  n.f = nullptr;
  n.df = nullptr;
  return n;
}

Var Tape::finish(Node& n, Op op, int a, int b) {
  n.op = op;
  n.a = a;
  n.b = b;
  if (op != Op::kLeaf) {
    bool rg = false;
    if (a >= 0) rg = rg || nodes_[static_cast<size_t>(a)].requires_grad;
    if (b >= 0) rg = rg || nodes_[static_cast<size_t>(b)].requires_grad;
    for (int p : n.idx)
      if (op == Op::kConcatRows && p >= 0) rg = rg || nodes_[static_cast<size_t>(p)].requires_grad;
    n.requires_grad = rg;
  }
  const int id = static_cast<int>(used_);
  ++used_;
  return Var{this, id};
}

const Tape::Node& Tape::node(Var v) const {
  require(v.tape == this && v.id >= 0 && static_cast<size_t>(v.id) < used_, "stale or foreign Var");
  return nodes_[static_cast<size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  require(v.tape == this && v.id >= 0 && static_cast<size_t>(v.id) < used_, "stale or foreign Var");
  return nodes_[static_cast<size_t>(v.id)];
}

void Tape::check_same_shape(Var a, Var b, const char* what) const {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.same_shape(nb.value),
          msg(what, ": shape mismatch ", na.value.shape_str(), " vs ", nb.value.shape_str()));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node& n = fresh();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return finish(n, Op::kLeaf, -1, -1);
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node& n = fresh();
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
  return finish(n, Op::kAdd, a.id, b.id);
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node& n = fresh();
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = va[i] - vb[i];
  return finish(n, Op::kSub, a.id, b.id);
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node& n = fresh();
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = va[i] * vb[i];
  return finish(n, Op::kMul, a.id, b.id);
}

Var Tape::neg(Var a) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = -va[i];
  return finish(n, Op::kNeg, a.id, -1);
}

#define DAMBA_UNARY(NAME, OPK, EXPR)                     \
  Var Tape::NAME(Var a) {                                \
    Node& n = fresh();                                   \
    const Tensor& va = node(a).value;                    \
    n.value.resize_like(va);                             \
    for (long long i = 0; i < va.size(); ++i) {          \
      const double x = va[i];                            \
      (void)x;                                           \
      n.value[i] = (EXPR);                               \
    }                                                    \
    return finish(n, Op::OPK, a.id, -1);                 \
  }

DAMBA_UNARY(exp, kExp, std::exp(x))
DAMBA_UNARY(log, kLog, std::log(x))
DAMBA_UNARY(sqrt, kSqrt, std::sqrt(x))
DAMBA_UNARY(abs, kAbs, std::fabs(x))
DAMBA_UNARY(softplus, kSoftplus, stable_softplus(x))
DAMBA_UNARY(tanh, kTanh, std::tanh(x))
DAMBA_UNARY(phi1, kPhi1, phi1_value(x))
#undef DAMBA_UNARY

Var Tape::add_scalar(Var a, double c) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = va[i] + c;
  n.c0 = c;
  return finish(n, Op::kAddScalar, a.id, -1);
}

Var Tape::mul_scalar(Var a, double c) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = va[i] * c;
  n.c0 = c;
  return finish(n, Op::kMulScalar, a.id, -1);
}

Var Tape::div_by_scalar(Var x, Var s) {
  require(node(s).value.size() == 1, "div_by_scalar: divisor must be scalar");
  Node& n = fresh();
  const Tensor& vx = node(x).value;
  const double sv = node(s).value[0];
  n.value.resize_like(vx);
  for (long long i = 0; i < vx.size(); ++i) n.value[i] = vx[i] / sv;
  return finish(n, Op::kDivByScalar, x.id, s.id);
}

Var Tape::sum(Var a) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  double acc = 0.0;
  for (long long i = 0; i < va.size(); ++i) acc += va[i];
  n.value = Tensor::scalar(acc);
  return finish(n, Op::kSum, a.id, -1);
}

Var Tape::mean(Var a) {
  require(node(a).value.size() > 0, "mean of empty tensor");
  Node& n = fresh();
  const Tensor& va = node(a).value;
  double acc = 0.0;
  for (long long i = 0; i < va.size(); ++i) acc += va[i];
  n.value = Tensor::scalar(acc / static_cast<double>(va.size()));
  return finish(n, Op::kMean, a.id, -1);
}

Var Tape::repeat_scalar(Var a, const std::vector<int>& shape) {
  require(node(a).value.size() == 1, "repeat_scalar: source must be scalar");
  Node& n = fresh();
  const double v = node(a).value[0];
  n.value = Tensor(shape);
  n.value.fill(v);
  return finish(n, Op::kRepeatScalar, a.id, -1);
}

Var Tape::reshape(Var a, const std::vector<int>& shape) {
  Node& n = fresh();
  n.value = node(a).value.reshaped(shape);
  return finish(n, Op::kReshape, a.id, -1);
}

Var Tape::slice_rows(Var a, int start, int count) {
  const Tensor& va = node(a).value;
  require(va.rank() == 2, "slice_rows: rank-2 input required");
  require(start >= 0 && count >= 0 && start + count <= va.dim(0),
          msg("slice_rows: range [", start, ",", start + count, ") out of ", va.dim(0), " rows"));
  Node& n = fresh();
  const int cols = va.dim(1);
  n.value = Tensor({count, cols});
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < cols; ++j) n.value.at(i, j) = va.at(start + i, j);
  n.i0 = start;
  n.i1 = count;
  return finish(n, Op::kSliceRows, a.id, -1);
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const int cols = node(parts[0]).value.dim(1);
  int rows = 0;
  for (Var p : parts) {
    const Tensor& vp = node(p).value;
    require(vp.rank() == 2 && vp.dim(1) == cols, "concat_rows: column mismatch");
    rows += vp.dim(0);
  }
  Node& n = fresh();
  n.value = Tensor({rows, cols});
  int r = 0;
  for (Var p : parts) {
    const Tensor& vp = node(p).value;
    for (int i = 0; i < vp.dim(0); ++i)
      for (int j = 0; j < cols; ++j) n.value.at(r + i, j) = vp.at(i, j);
    r += vp.dim(0);
    n.idx.push_back(p.id);
  }
  return finish(n, Op::kConcatRows, -1, -1);
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  require(va.rank() == 2 && vb.rank() == 2 && va.dim(0) == vb.dim(0),
          "concat_cols: row mismatch");
  Node& n = fresh();
  const int m = va.dim(0), n1 = va.dim(1), n2 = vb.dim(1);
  n.value = Tensor({m, n1 + n2});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n1; ++j) n.value.at(i, j) = va.at(i, j);
    for (int j = 0; j < n2; ++j) n.value.at(i, n1 + j) = vb.at(i, j);
  }
  return finish(n, Op::kConcatCols, a.id, b.id);
}

Var Tape::transpose(Var a) {
  const Tensor& va = node(a).value;
  require(va.rank() == 2, "transpose: rank-2 input required");
  Node& n = fresh();
  n.value = Tensor({va.dim(1), va.dim(0)});
  for (int i = 0; i < va.dim(0); ++i)
    for (int j = 0; j < va.dim(1); ++j) n.value.at(j, i) = va.at(i, j);
  return finish(n, Op::kTranspose, a.id, -1);
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& va = node(a).value;
  require(va.rank() == 2, "gather_rows: rank-2 input required");
  for (int r : idx)
    require(r >= 0 && r < va.dim(0), msg("gather_rows: index ", r, " out of ", va.dim(0)));
  Node& n = fresh();
  const int cols = va.dim(1);
  n.value = Tensor({static_cast<int>(idx.size()), cols});
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < cols; ++j) n.value.at(static_cast<int>(i), j) = va.at(idx[i], j);
  n.idx = std::move(idx);
  return finish(n, Op::kGatherRows, a.id, -1);
}

Var Tape::scatter_mean_rows(Var a, std::vector<int> slots, int num_slots) {
  const Tensor& va = node(a).value;
  require(va.rank() == 2, "scatter_mean_rows: rank-2 input required");
  require(static_cast<int>(slots.size()) == va.dim(0), "scatter_mean_rows: one slot per row");
  for (int s : slots)
    require(s >= 0 && s < num_slots, msg("scatter_mean_rows: slot ", s, " out of ", num_slots));
  Node& n = fresh();
  const int cols = va.dim(1);
  n.value = Tensor({num_slots, cols});
  n.extra.assign(static_cast<size_t>(num_slots), 0);
  for (size_t i = 0; i < slots.size(); ++i) {
    n.extra[static_cast<size_t>(slots[i])] += 1;
    for (int j = 0; j < cols; ++j)
      n.value.at(slots[i], j) += va.at(static_cast<int>(i), j);
  }
  for (int s = 0; s < num_slots; ++s) {
    if (n.extra[static_cast<size_t>(s)] == 0) continue;
    const double inv = 1.0 / n.extra[static_cast<size_t>(s)];
    for (int j = 0; j < cols; ++j) n.value.at(s, j) *= inv;
  }
  n.idx = std::move(slots);
  return finish(n, Op::kScatterMeanRows, a.id, -1);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  require(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0),
          msg("matmul: inner dims disagree ", va.shape_str(), " x ", vb.shape_str()));
  Node& n = fresh();
  n.value = Tensor({va.dim(0), vb.dim(1)});
  mm_acc(n.value.data(), va.data(), vb.data(), va.dim(0), va.dim(1), vb.dim(1));
  return finish(n, Op::kMatmul, a.id, b.id);
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  require(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(1),
          msg("matmul_nt: inner dims disagree ", va.shape_str(), " x ", vb.shape_str(), "^T"));
  Node& n = fresh();
  n.value = Tensor({va.dim(0), vb.dim(0)});
  mm_nt_acc(n.value.data(), va.data(), vb.data(), va.dim(0), va.dim(1), vb.dim(0));
  return finish(n, Op::kMatmulNT, a.id, b.id);
}

Var Tape::add_rowvec(Var a, Var v) {
  const Tensor& va = node(a).value;
  const Tensor& vv = node(v).value;
  require(va.rank() == 2 && vv.rank() == 1 && vv.dim(0) == va.dim(1),
          "add_rowvec: vector length must match columns");
  Node& n = fresh();
  n.value.resize_like(va);
  for (int i = 0; i < va.dim(0); ++i)
    for (int j = 0; j < va.dim(1); ++j) n.value.at(i, j) = va.at(i, j) + vv[j];
  return finish(n, Op::kAddRowVec, a.id, v.id);
}

Var Tape::linear(Var x, Var w, Var b) { return add_rowvec(matmul_nt(x, w), b); }

Var Tape::outer_ds(Var delta, Var adiag) {
  const Tensor& vd = node(delta).value;
  const Tensor& va = node(adiag).value;
  require(vd.rank() == 2 && va.rank() == 1, "outer_ds: want (m,d) and (s)");
  Node& n = fresh();
  const int m = vd.dim(0), d = vd.dim(1), s = va.dim(0);
  n.value = Tensor({m, d, s});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      const double dv = vd.at(i, j);
      for (int k = 0; k < s; ++k) n.value.at(i, j, k) = dv * va[k];
    }
  return finish(n, Op::kOuterDs, delta.id, adiag.id);
}

Var Tape::scale_bd(Var t, Var v) {
  const Tensor& vt = node(t).value;
  const Tensor& vv = node(v).value;
  require(vt.rank() == 3 && vv.rank() == 2 && vt.dim(0) == vv.dim(0) && vt.dim(1) == vv.dim(1),
          "scale_bd: want (m,d,s) and (m,d)");
  Node& n = fresh();
  n.value.resize_like(vt);
  const int m = vt.dim(0), d = vt.dim(1), s = vt.dim(2);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      const double f = vv.at(i, j);
      for (int k = 0; k < s; ++k) n.value.at(i, j, k) = vt.at(i, j, k) * f;
    }
  return finish(n, Op::kScaleBd, t.id, v.id);
}

Var Tape::scale_bs(Var t, Var v) {
  const Tensor& vt = node(t).value;
  const Tensor& vv = node(v).value;
  require(vt.rank() == 3 && vv.rank() == 2 && vt.dim(0) == vv.dim(0) && vt.dim(2) == vv.dim(1),
          "scale_bs: want (m,d,s) and (m,s)");
  Node& n = fresh();
  n.value.resize_like(vt);
  const int m = vt.dim(0), d = vt.dim(1), s = vt.dim(2);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < s; ++k) n.value.at(i, j, k) = vt.at(i, j, k) * vv.at(i, k);
  return finish(n, Op::kScaleBs, t.id, v.id);
}

Var Tape::contract_s(Var t, Var c) {
  const Tensor& vt = node(t).value;
  const Tensor& vc = node(c).value;
  require(vt.rank() == 3 && vc.rank() == 2 && vt.dim(0) == vc.dim(0) && vt.dim(2) == vc.dim(1),
          "contract_s: want (m,d,s) and (m,s)");
  Node& n = fresh();
  const int m = vt.dim(0), d = vt.dim(1), s = vt.dim(2);
  n.value = Tensor({m, d});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < s; ++k) acc += vt.at(i, j, k) * vc.at(i, k);
      n.value.at(i, j) = acc;
    }
  return finish(n, Op::kContractS, t.id, c.id);
}

Var Tape::affine_rows(Var x, Tensor scale, Tensor shift) {
  const Tensor& vx = node(x).value;
  require(vx.rank() == 2, "affine_rows: rank-2 input required");
  require(scale.rank() == 1 && scale.dim(0) == vx.dim(0), "affine_rows: scale length != rows");
  require(shift.rank() == 1 && shift.dim(0) == vx.dim(0), "affine_rows: shift length != rows");
  Node& n = fresh();
  n.value.resize_like(vx);
  for (int i = 0; i < vx.dim(0); ++i)
    for (int j = 0; j < vx.dim(1); ++j) n.value.at(i, j) = vx.at(i, j) * scale[i] + shift[i];
  n.aux0 = std::move(scale);
  n.aux1 = std::move(shift);
  return finish(n, Op::kAffineRows, x.id, -1);
}

Var Tape::round_ste(Var a) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = std::nearbyint(va[i]);
  return finish(n, Op::kRoundSte, a.id, -1);
}

Var Tape::map_unary(Var a, double (*f)(double), double (*df)(double)) {
  Node& n = fresh();
  const Tensor& va = node(a).value;
  n.value.resize_like(va);
  for (long long i = 0; i < va.size(); ++i) n.value[i] = f(va[i]);
  n.f = f;
  n.df = df;
  return finish(n, Op::kMapUnary, a.id, -1);
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const { return node(v).grad; }

double Tape::scalar_value(Var v) const {
  const Tensor& t = node(v).value;
  require(t.size() == 1, "scalar_value: node is not scalar");
  return t[0];
}

void Tape::backward(Var root) {
  const Node& rn = node(root);
  require(rn.value.size() == 1, "backward: root must be scalar");

  for (int i = 0; i <= root.id; ++i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad) continue;
    n.grad.resize_like(n.value);
    n.grad.fill(0.0);
  }
  Node& rmut = node(root);
  if (!rmut.requires_grad) return;  // constant graph: all leaf gradients are zero
  rmut.grad[0] = 1.0;

  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    const Tensor& g = n.grad;
    Node* pa = n.a >= 0 ? &nodes_[static_cast<size_t>(n.a)] : nullptr;
    Node* pb = n.b >= 0 ? &nodes_[static_cast<size_t>(n.b)] : nullptr;
    const bool wa = pa && pa->requires_grad;
    const bool wb = pb && pb->requires_grad;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        if (wb) for (long long t = 0; t < g.size(); ++t) pb->grad[t] += g[t];
        break;
      case Op::kSub:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        if (wb) for (long long t = 0; t < g.size(); ++t) pb->grad[t] -= g[t];
        break;
      case Op::kMul:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] * pb->value[t];
        if (wb) for (long long t = 0; t < g.size(); ++t) pb->grad[t] += g[t] * pa->value[t];
        break;
      case Op::kNeg:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] -= g[t];
        break;
      case Op::kExp:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] * n.value[t];
        break;
      case Op::kLog:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] / pa->value[t];
        break;
      case Op::kSqrt:
        if (wa)
          for (long long t = 0; t < g.size(); ++t)
            if (pa->value[t] > 0.0) pa->grad[t] += g[t] / (2.0 * n.value[t]);
        break;
      case Op::kAbs:
        if (wa)
          for (long long t = 0; t < g.size(); ++t) {
            const double x = pa->value[t];
            pa->grad[t] += g[t] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
          }
        break;
      case Op::kSoftplus:
        if (wa)
          for (long long t = 0; t < g.size(); ++t)
            pa->grad[t] += g[t] * stable_sigmoid(pa->value[t]);
        break;
      case Op::kTanh:
        if (wa)
          for (long long t = 0; t < g.size(); ++t)
            pa->grad[t] += g[t] * (1.0 - n.value[t] * n.value[t]);
        break;
      case Op::kPhi1:
        if (wa)
          for (long long t = 0; t < g.size(); ++t)
            pa->grad[t] += g[t] * phi1_prime(pa->value[t]);
        break;
      case Op::kAddScalar:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        break;
      case Op::kMulScalar:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] * n.c0;
        break;
      case Op::kDivByScalar: {
        const double sv = pb->value[0];
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] / sv;
        if (wb) {
          double acc = 0.0;
          for (long long t = 0; t < g.size(); ++t) acc += g[t] * n.value[t];
          pb->grad[0] -= acc / sv;
        }
        break;
      }
      case Op::kSum:
        if (wa) for (long long t = 0; t < pa->grad.size(); ++t) pa->grad[t] += g[0];
        break;
      case Op::kMean:
        if (wa) {
          const double gv = g[0] / static_cast<double>(pa->value.size());
          for (long long t = 0; t < pa->grad.size(); ++t) pa->grad[t] += gv;
        }
        break;
      case Op::kRepeatScalar:
        if (wa) {
          double acc = 0.0;
          for (long long t = 0; t < g.size(); ++t) acc += g[t];
          pa->grad[0] += acc;
        }
        break;
      case Op::kReshape:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        break;
      case Op::kSliceRows:
        if (wa) {
          const int cols = n.value.dim(1);
          for (int r = 0; r < n.i1; ++r)
            for (int c = 0; c < cols; ++c) pa->grad.at(n.i0 + r, c) += g.at(r, c);
        }
        break;
      case Op::kConcatRows: {
        int r = 0;
        const int cols = n.value.dim(1);
        for (int pid : n.idx) {
          Node& p = nodes_[static_cast<size_t>(pid)];
          if (p.requires_grad)
            for (int i2 = 0; i2 < p.value.dim(0); ++i2)
              for (int c = 0; c < cols; ++c) p.grad.at(i2, c) += g.at(r + i2, c);
          r += p.value.dim(0);
        }
        break;
      }
      case Op::kConcatCols: {
        const int m = n.value.dim(0);
        const int n1 = pa->value.dim(1);
        const int n2 = pb->value.dim(1);
        if (wa)
          for (int i2 = 0; i2 < m; ++i2)
            for (int c = 0; c < n1; ++c) pa->grad.at(i2, c) += g.at(i2, c);
        if (wb)
          for (int i2 = 0; i2 < m; ++i2)
            for (int c = 0; c < n2; ++c) pb->grad.at(i2, c) += g.at(i2, n1 + c);
        break;
      }
      case Op::kTranspose:
        if (wa)
          for (int i2 = 0; i2 < n.value.dim(0); ++i2)
            for (int c = 0; c < n.value.dim(1); ++c) pa->grad.at(c, i2) += g.at(i2, c);
        break;
      case Op::kGatherRows:
        if (wa) {
          const int cols = n.value.dim(1);
          for (size_t r = 0; r < n.idx.size(); ++r)
            for (int c = 0; c < cols; ++c)
              pa->grad.at(n.idx[r], c) += g.at(static_cast<int>(r), c);
        }
        break;
      case Op::kScatterMeanRows:
        if (wa) {
          const int cols = n.value.dim(1);
          for (size_t r = 0; r < n.idx.size(); ++r) {
            const int s = n.idx[r];
            const double inv = 1.0 / n.extra[static_cast<size_t>(s)];
            for (int c = 0; c < cols; ++c)
              pa->grad.at(static_cast<int>(r), c) += g.at(s, c) * inv;
          }
        }
        break;
      case Op::kMatmul:
        // y = a b: ga += g b^T, gb += a^T g
        if (wa)
          mm_nt_acc(pa->grad.data(), g.data(), pb->value.data(),
                    g.dim(0), g.dim(1), pa->value.dim(1));
        if (wb)
          mm_tn_acc(pb->grad.data(), pa->value.data(), g.data(),
                    pa->value.dim(0), pa->value.dim(1), g.dim(1));
        break;
      case Op::kMatmulNT:
        // y = a b^T: ga += g b, gb += g^T a
        if (wa)
          mm_acc(pa->grad.data(), g.data(), pb->value.data(),
                 g.dim(0), g.dim(1), pa->value.dim(1));
        if (wb)
          mm_tn_acc(pb->grad.data(), g.data(), pa->value.data(),
                    g.dim(0), g.dim(1), pa->value.dim(1));
        break;
      case Op::kAddRowVec:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        if (wb) {
          const int m = n.value.dim(0), c = n.value.dim(1);
          for (int i2 = 0; i2 < m; ++i2)
            for (int j = 0; j < c; ++j) pb->grad[j] += g.at(i2, j);
        }
        break;
      case Op::kOuterDs: {
        const int m = n.value.dim(0), d = n.value.dim(1), s = n.value.dim(2);
        for (int i2 = 0; i2 < m; ++i2)
          for (int j = 0; j < d; ++j) {
            double accd = 0.0;
            for (int k = 0; k < s; ++k) {
              const double gv = g.at(i2, j, k);
              if (wb) pb->grad[k] += gv * pa->value.at(i2, j);
              accd += gv * pb->value[k];
            }
            if (wa) pa->grad.at(i2, j) += accd;
          }
        break;
      }
      case Op::kScaleBd: {
        const int m = n.value.dim(0), d = n.value.dim(1), s = n.value.dim(2);
        for (int i2 = 0; i2 < m; ++i2)
          for (int j = 0; j < d; ++j) {
            const double f = pb->value.at(i2, j);
            double accv = 0.0;
            for (int k = 0; k < s; ++k) {
              const double gv = g.at(i2, j, k);
              if (wa) pa->grad.at(i2, j, k) += gv * f;
              accv += gv * pa->value.at(i2, j, k);
            }
            if (wb) pb->grad.at(i2, j) += accv;
          }
        break;
      }
      case Op::kScaleBs: {
        const int m = n.value.dim(0), d = n.value.dim(1), s = n.value.dim(2);
        for (int i2 = 0; i2 < m; ++i2)
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < s; ++k) {
              const double gv = g.at(i2, j, k);
              if (wa) pa->grad.at(i2, j, k) += gv * pb->value.at(i2, k);
              if (wb) pb->grad.at(i2, k) += gv * pa->value.at(i2, j, k);
            }
        break;
      }
      case Op::kContractS: {
        const int m = pa->value.dim(0), d = pa->value.dim(1), s = pa->value.dim(2);
        for (int i2 = 0; i2 < m; ++i2)
          for (int j = 0; j < d; ++j) {
            const double gv = g.at(i2, j);
            for (int k = 0; k < s; ++k) {
              if (wa) pa->grad.at(i2, j, k) += gv * pb->value.at(i2, k);
              if (wb) pb->grad.at(i2, k) += gv * pa->value.at(i2, j, k);
            }
          }
        break;
      }
      case Op::kAffineRows:
        if (wa)
          for (int i2 = 0; i2 < n.value.dim(0); ++i2)
            for (int j = 0; j < n.value.dim(1); ++j)
              pa->grad.at(i2, j) += g.at(i2, j) * n.aux0[i2];
        break;
      case Op::kRoundSte:
        if (wa) for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t];
        break;
      case Op::kMapUnary:
        if (wa)
          for (long long t = 0; t < g.size(); ++t) pa->grad[t] += g[t] * n.df(pa->value[t]);
        break;
    }
  }
}

void Tape::reset() { used_ = 0; }

}  // namespace damba
