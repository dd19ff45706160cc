#include <doctest.h>

#include <cmath>

#include "damba/error.hpp"
#include "damba/grad_check.hpp"
#include "damba/optimizer.hpp"
#include "damba/rng.hpp"
#include "damba/tape.hpp"
#include "oracles.hpp"

using namespace damba;

namespace {

Tensor random_tensor(std::initializer_list<int> shape, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(shape);
  for (long long i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Smooth scalar readout: weights depend only on the seed and the output
// shape, so repeated evaluations inside grad_check see the same function.
Var weighted_readout(Tape& tape, Var x, uint64_t seed) {
  Rng rng(seed);
  Tensor w;
  w.resize_like(tape.value(x));
  for (long long i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return tape.sum(tape.mul(x, tape.constant(std::move(w))));
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("matmul identity and hand examples") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var b = tape.constant(Tensor({2, 1}, {2, 3}));
  Var c = tape.matmul(a, b);
  CHECK(tape.value(c)[0] == doctest::Approx(2.0));
  CHECK(tape.value(c)[1] == doctest::Approx(3.0));

  Var d = tape.matmul(tape.constant(Tensor({1, 2}, {1, 2})),
                      tape.constant(Tensor({2, 1}, {3, 4})));
  CHECK(tape.value(d)[0] == doctest::Approx(11.0));
}

TEST_CASE("matmul matches the triple-loop oracle exactly") {
  Rng rng(42);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  Tape tape;
  Var c = tape.matmul(tape.constant(a), tape.constant(b));
  const Tensor ref = oracle::matmul(a, b);
  for (long long i = 0; i < ref.size(); ++i) CHECK(tape.value(c)[i] == ref[i]);
}

TEST_CASE("matmul rejects mismatched inner dims") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 2}));
  CHECK_THROWS_AS(tape.matmul(a, b), ValidationError);
}

TEST_CASE("matmul associativity within 1e-10") {
  Rng rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor a = random_tensor({4, 6}, rng);
    Tensor b = random_tensor({6, 3}, rng);
    Tensor c = random_tensor({3, 5}, rng);
    Tape tape;
    Var va = tape.constant(a), vb = tape.constant(b), vc = tape.constant(c);
    Var left = tape.matmul(tape.matmul(va, vb), vc);
    Var right = tape.matmul(va, tape.matmul(vb, vc));
    for (long long i = 0; i < tape.value(left).size(); ++i)
      CHECK(std::fabs(tape.value(left)[i] - tape.value(right)[i]) < 1e-10);
  }
}

TEST_CASE("softplus closed forms and asymptotes") {
  Tape tape;
  Var x = tape.constant(Tensor({3}, {0.0, 50.0, -50.0}));
  Var y = tape.softplus(x);
  CHECK(tape.value(y)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(tape.value(y)[1] == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(tape.value(y)[2] == doctest::Approx(std::exp(-50.0)).epsilon(1e-6));
}

TEST_CASE("softplus positivity and softplus(x) - max(x,0) in [0, ln 2]") {
  Rng rng(3);
  Tape tape;
  for (int rep = 0; rep < 200; ++rep) {
    const double x = rng.uniform(-30.0, 30.0);
    Var y = tape.softplus(tape.constant_scalar(x));
    const double v = tape.value(y)[0];
    CHECK(v > 0.0);
    const double gap = v - std::max(x, 0.0);
    CHECK(gap >= 0.0);
    CHECK(gap <= std::log(2.0) + 1e-12);
  }
}

TEST_CASE("backward: d(x^2)/dx = 2x") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0), true);
  Var f = tape.mul(x, x);
  tape.backward(f);
  CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1.0, 2.0}), true);
  CHECK_THROWS_AS(tape.backward(x), ValidationError);
}

TEST_CASE("backward on a constant graph leaves zero gradients") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0), true);
  Var f = tape.mul(tape.constant_scalar(5.0), tape.constant_scalar(3.0));
  tape.backward(f);
  CHECK(tape.grad(x).size() == 1);
  CHECK(tape.grad(x)[0] == 0.0);
}

TEST_CASE("backward of sum(softplus(Wx)) matches finite differences") {
  Rng rng(11);
  ParamStore store;
  store.create("w", random_tensor({4, 3}, rng));
  store.create("x", random_tensor({5, 3}, rng));
  auto f = [&](Tape& tape) {
    Var w = store.at("w").bound;
    Var x = store.at("x").bound;
    return tape.sum(tape.softplus(tape.matmul_nt(x, w)));
  };
  const GradCheckReport report = grad_check(f, store, 1e-5, 1e-4);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("finite differences validate every differentiable op") {
  Rng rng(19);
  // Each case builds a composite around one op; positive inputs where the
  // domain requires it.
  struct Case {
    const char* name;
    ScalarFn fn;
  };
  ParamStore store;
  store.create("a", random_tensor({3, 4}, rng));
  store.create("b", random_tensor({3, 4}, rng));
  store.create("m1", random_tensor({3, 4}, rng));
  store.create("m2", random_tensor({4, 2}, rng));
  store.create("pos", random_tensor({2, 3}, rng, 0.4, 2.0));
  store.create("vec", random_tensor({4}, rng));
  store.create("vec2", random_tensor({2}, rng));
  store.create("bds", random_tensor({2, 3, 4}, rng));
  store.create("bd", random_tensor({2, 3}, rng));
  store.create("bs", random_tensor({2, 4}, rng));
  store.create("sc", random_tensor({1}, rng, 0.5, 1.5));

  auto param = [&](const char* n) { return store.at(n).bound; };
  std::vector<Case> cases;
  cases.push_back({"add_sub_mul_neg", [&](Tape& t) {
    Var z = t.sub(t.mul(param("a"), param("b")), t.neg(param("a")));
    return weighted_readout(t, t.add(z, param("b")), 201);
  }});
  cases.push_back({"exp", [&](Tape& t) { return weighted_readout(t, t.exp(param("a")), 202); }});
  cases.push_back({"log_sqrt", [&](Tape& t) {
    return weighted_readout(t, t.log(t.sqrt(param("pos"))), 203);
  }});
  cases.push_back({"abs", [&](Tape& t) { return weighted_readout(t, t.abs(param("a")), 204); }});
  cases.push_back({"softplus_tanh", [&](Tape& t) {
    return weighted_readout(t, t.tanh(t.softplus(param("a"))), 205);
  }});
  cases.push_back({"phi1", [&](Tape& t) { return weighted_readout(t, t.phi1(param("a")), 206); }});
  cases.push_back({"scalar_ops", [&](Tape& t) {
    return weighted_readout(t, t.mul_scalar(t.add_scalar(param("a"), 0.7), -1.3), 207);
  }});
  cases.push_back({"div_by_scalar", [&](Tape& t) {
    return weighted_readout(t, t.div_by_scalar(param("a"), t.sum(param("sc"))), 208);
  }});
  cases.push_back({"sum_mean", [&](Tape& t) {
    return t.add(t.sum(param("a")), t.mean(param("b")));
  }});
  cases.push_back({"repeat_scalar", [&](Tape& t) {
    return weighted_readout(t, t.repeat_scalar(t.mean(param("a")), {2, 3}), 209);
  }});
  cases.push_back({"reshape_transpose", [&](Tape& t) {
    return weighted_readout(t, t.transpose(t.reshape(param("a"), {4, 3})), 210);
  }});
  cases.push_back({"slice_concat", [&](Tape& t) {
    Var s1 = t.slice_rows(param("a"), 0, 2);
    Var s2 = t.slice_rows(param("a"), 1, 2);
    return weighted_readout(t, t.concat_rows({s1, s2, param("b")}), 211);
  }});
  cases.push_back({"concat_cols", [&](Tape& t) {
    return weighted_readout(t, t.concat_cols(param("a"), param("b")), 212);
  }});
  cases.push_back({"gather_rows", [&](Tape& t) {
    return weighted_readout(t, t.gather_rows(param("a"), {2, 0, 0, 1}), 213);
  }});
  cases.push_back({"scatter_mean_rows", [&](Tape& t) {
    return weighted_readout(t, t.scatter_mean_rows(param("a"), {1, 0, 1}, 4), 214);
  }});
  cases.push_back({"matmul", [&](Tape& t) {
    return weighted_readout(t, t.matmul(param("m1"), param("m2")), 215);
  }});
  cases.push_back({"matmul_nt_linear", [&](Tape& t) {
    return weighted_readout(t, t.linear(param("m1"), t.transpose(param("m2")), param("vec2")), 216);
  }});
  cases.push_back({"add_rowvec", [&](Tape& t) {
    return weighted_readout(t, t.add_rowvec(param("a"), param("vec")), 217);
  }});
  cases.push_back({"outer_scale_contract", [&](Tape& t) {
    Var da = t.outer_ds(param("bd"), param("vec"));
    Var sc1 = t.scale_bd(da, param("bd"));
    Var sc2 = t.scale_bs(sc1, param("bs"));
    return weighted_readout(t, t.contract_s(t.add(sc2, param("bds")), param("bs")), 218);
  }});
  cases.push_back({"affine_rows", [&](Tape& t) {
    Tensor scale({3}, std::vector<double>{1.5, -0.5, 2.0});
    Tensor shift({3}, std::vector<double>{0.1, 0.2, -0.3});
    return weighted_readout(t, t.affine_rows(param("m1"), scale, shift), 219);
  }});

  for (auto& c : cases) {
    CAPTURE(c.name);
    const GradCheckReport report = grad_check(c.fn, store, 1e-5, 1e-4);
    CAPTURE(report.worst_param);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("grad_check flags a corrupted adjoint rule") {
  ParamStore store;
  Rng rng(5);
  store.create("x", random_tensor({3}, rng, 0.5, 1.5));
  auto bad_fn = [&](Tape& tape) {
    // Deliberately wrong derivative: claims d/dx sin(x) = cos(x) + 0.5.
    Var y = tape.map_unary(store.at("x").bound, [](double v) { return std::sin(v); },
                           [](double v) { return std::cos(v) + 0.5; });
    return tape.sum(y);
  };
  const GradCheckReport report = grad_check(bad_fn, store, 1e-5, 1e-4);
  CHECK_FALSE(report.pass);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("grad_check reports exactly zero gradients for unused parameters") {
  ParamStore store;
  Rng rng(6);
  store.create("used", random_tensor({2}, rng));
  store.create("unused", random_tensor({2}, rng));
  auto fn = [&](Tape& tape) { return tape.sum(tape.mul(store.at("used").bound, store.at("used").bound)); };
  Tape tape;
  store.bind_all(tape);
  Var root = fn(tape);
  tape.backward(root);
  const Tensor& g = tape.grad(store.at("unused").bound);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(grad_check(fn, store, 1e-5, 1e-4).pass);
}

TEST_CASE("grad_check reports NaN as a diagnostic failure") {
  ParamStore store;
  store.create("x", Tensor({1}, {-1.0}));
  auto fn = [&](Tape& tape) { return tape.sum(tape.log(store.at("x").bound)); };
  const GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CHECK(report.nan_detected);
  CHECK_FALSE(report.pass);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamStore store;
  Param& p = store.create("p", Tensor({3}, {1.0, -2.0, 3.0}));
  Adam adam;
  Tape tape;
  store.bind_all(tape);
  Var loss = tape.mul(tape.constant_scalar(1.0), tape.constant_scalar(1.0));
  tape.backward(loss);  // constant graph: parameter grads all zero
  adam.step(store, tape);
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -2.0);
  CHECK(p.value[2] == 3.0);
}

TEST_CASE("adam: constant gradient moves parameters against its sign") {
  ParamStore store;
  Param& p = store.create("p", Tensor({2}, {0.5, -0.5}));
  Adam adam;
  const double before0 = p.value[0], before1 = p.value[1];
  for (int i = 0; i < 10; ++i) {
    Tape tape;
    store.bind_all(tape);
    // loss = +3*p0 - 2*p1 -> gradient (+3, -2)
    Var loss = tape.sum(tape.mul(store.at("p").bound, tape.constant(Tensor({2}, {3.0, -2.0}))));
    tape.backward(loss);
    adam.step(store, tape);
  }
  CHECK(p.value[0] < before0);
  CHECK(p.value[1] > before1);
}

TEST_CASE("adam: quadratic bowl converges to the minimum") {
  ParamStore store;
  Param& x = store.create("x", Tensor({1}, {-3.0}));
  Adam adam(AdamConfig{0.05, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 500; ++i) {
    Tape tape;
    store.bind_all(tape);
    Var d = tape.add_scalar(store.at("x").bound, -2.0);
    Var loss = tape.sum(tape.mul(d, d));
    tape.backward(loss);
    adam.step(store, tape);
  }
  CHECK(std::fabs(x.value[0] - 2.0) <= 1e-3);
}

TEST_CASE("adam: non-finite gradient raises a numeric error naming the parameter") {
  ParamStore store;
  store.create("theta", Tensor({1}, {0.5}));
  Adam adam;
  Tape tape;
  store.bind_all(tape);
  Var loss = tape.sum(tape.log(tape.add_scalar(store.at("theta").bound, -0.5)));  // log(0)
  tape.backward(loss);
  try {
    adam.step(store, tape);
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
}

TEST_CASE("rng is deterministic and fork streams differ") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng base(9);
  Rng f1 = base.fork(1), f2 = base.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
}

}  // TEST_SUITE
