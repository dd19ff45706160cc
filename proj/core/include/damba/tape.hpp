#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "damba/tensor.hpp"

namespace damba {

class Tape;

// Lightweight handle to a node on a tape. Invalidated by Tape::reset().
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);

// Define-by-run reverse-mode tape over Tensor-valued nodes. The graph is
// rebuilt per forward pass; reset() keeps node storage so steady-state
// training reuses buffers instead of reallocating.
class Tape {
 public:
  enum class Op : uint8_t {
    kLeaf,
    kAdd, kSub, kMul, kNeg,
    kExp, kLog, kSqrt, kAbs, kSoftplus, kTanh, kPhi1,
    kAddScalar, kMulScalar, kDivByScalar,
    kSum, kMean,
    kReshape, kSliceRows, kConcatRows, kConcatCols, kTranspose,
    kGatherRows, kScatterMeanRows, kRepeatScalar,
    kMatmul, kMatmulNT, kAddRowVec,
    kOuterDs, kScaleBd, kScaleBs, kContractS,
    kAffineRows, kRoundSte, kMapUnary,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Parameters want gradients; constants do not.
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

  // Elementwise, identical shapes.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);   // adjoint uses subgradient 0 at x == 0
  Var abs(Var a);    // sign(0) taken as 0
  Var softplus(Var a);
  Var tanh(Var a);
  // phi1(z) = (exp(z) - 1) / z with a series branch for |z| < 1e-6.
  Var phi1(Var a);

  Var add_scalar(Var a, double c);
  Var mul_scalar(Var a, double c);
  // Elementwise x / s where s is a scalar node; differentiable in both.
  Var div_by_scalar(Var x, Var s);

  Var sum(Var a);
  Var mean(Var a);
  // Scalar node broadcast to the given shape.
  Var repeat_scalar(Var a, const std::vector<int>& shape);

  Var reshape(Var a, const std::vector<int>& shape);
  Var slice_rows(Var a, int start, int count);          // rank-2
  Var concat_rows(const std::vector<Var>& parts);       // rank-2, same cols
  Var concat_cols(Var a, Var b);                        // rank-2, same rows
  Var transpose(Var a);                                 // rank-2
  Var gather_rows(Var a, std::vector<int> idx);         // rank-2
  // out[s] = mean over rows i with slot[i] == s; slots with no rows are zero.
  Var scatter_mean_rows(Var a, std::vector<int> slots, int num_slots);

  Var matmul(Var a, Var b);      // (m,k) x (k,n)
  Var matmul_nt(Var a, Var b);   // (m,k) x (n,k)^T -> (m,n)
  Var add_rowvec(Var a, Var v);  // (m,n) + broadcast (n)
  // y = x W^T + b with x (m,in), w (out,in), b (out).
  Var linear(Var x, Var w, Var b);

  // Broadcast kernels for the selective-scan state shape (m, d, s).
  Var outer_ds(Var delta, Var adiag);   // (m,d) x (s) -> (m,d,s)
  Var scale_bd(Var t, Var v);           // (m,d,s) * broadcast (m,d)
  Var scale_bs(Var t, Var v);           // (m,d,s) * broadcast (m,s)
  Var contract_s(Var t, Var c);         // sum_s t[m,d,s] c[m,s] -> (m,d)
  // out[i,j] = x[i,j] * scale[i] + shift[i] with constant per-row factors.
  Var affine_rows(Var x, Tensor scale, Tensor shift);
  // round() forward, identity gradient (straight-through).
  Var round_ste(Var a);
  // Generic elementwise map; the caller supplies value and derivative.
  Var map_unary(Var a, double (*f)(double), double (*df)(double));

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  double scalar_value(Var v) const;

  // Reverse sweep from a scalar root. Gradients of earlier backward() calls
  // on the same graph are discarded, not accumulated.
  void backward(Var root);

  void reset();
  size_t node_count() const { return used_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Op op = Op::kLeaf;
    bool requires_grad = false;
    int a = -1, b = -1;
    int i0 = 0, i1 = 0;
    double c0 = 0.0;
    std::vector<int> idx;       // gather targets / scatter slots / concat parents
    std::vector<int> extra;     // scatter slot counts
    double (*f)(double) = nullptr;
    double (*df)(double) = nullptr;
    Tensor aux0, aux1;          // constant payloads (affine_rows)
  };

  Node& fresh();
  Var finish(Node& n, Op op, int a, int b);
  const Node& node(Var v) const;
  Node& node(Var v);
  void check_same_shape(Var a, Var b, const char* what) const;

  // Deque keeps node references stable while the graph grows.
  std::deque<Node> nodes_;
  size_t used_ = 0;
};

}  // namespace damba
