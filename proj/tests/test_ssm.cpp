#include <doctest.h>

#include <cmath>

#include "damba/error.hpp"
#include "damba/grad_check.hpp"
#include "damba/ssm.hpp"
#include "oracles.hpp"

using namespace damba;

namespace {

DiscretizedStep scalar_step(double a_bar, double b_bar, double c) {
  DiscretizedStep st;
  st.a_bar = Tensor({1, 1}, {a_bar});
  st.b_bar = Tensor({1, 1}, {b_bar});
  st.c = Tensor({1}, {c});
  return st;
}

std::vector<DiscretizedStep> lti_steps(const DiscretizedStep& st, int len) {
  return std::vector<DiscretizedStep>(static_cast<size_t>(len), st);
}

}  // namespace

TEST_SUITE("ssm") {

TEST_CASE("zoh scalar closed form: A=-1, B=1, delta=ln 2") {
  const ZohPair z = discretize_zoh(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), std::log(2.0));
  CHECK(z.a_bar[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(z.b_bar[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("zoh tiny-step limit uses the series branch") {
  const double delta = 1e-9;
  const ZohPair z = discretize_zoh(Tensor({1}, {-1.0}), Tensor({1}, {3.0}), delta);
  CHECK(std::fabs(z.a_bar[0] - 1.0) < 2e-9);
  CHECK(std::fabs(z.b_bar[0] - delta * 3.0) < 1e-12);
}

TEST_CASE("zoh rejects non-positive delta") {
  CHECK_THROWS_AS(discretize_zoh(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), 0.0), ValidationError);
  CHECK_THROWS_AS(discretize_zoh(Tensor({1}, {-1.0}), Tensor({1}, {1.0}), -0.5), ValidationError);
}

TEST_CASE("zoh matches the 20-term Taylor oracle on random stable systems") {
  Rng rng(21);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int s = 1 + static_cast<int>(rng.next_below(6));
    std::vector<double> a(s), b(s);
    Tensor at({s}), bt({s});
    for (int i = 0; i < s; ++i) {
      a[i] = at[i] = -rng.uniform(0.1, 2.0);
      b[i] = bt[i] = rng.uniform(-2.0, 2.0);
    }
    // |delta * A| <= 2 keeps the truncated oracle itself below 1e-13 error.
    const double delta = rng.uniform(0.01, 1.0);
    const ZohPair z = discretize_zoh(at, bt, delta);
    const oracle::TaylorZoh ref = oracle::taylor_zoh(a, b, delta);
    for (int i = 0; i < s; ++i) {
      worst = std::max(worst, std::fabs(z.a_bar[i] - ref.a_bar[i]) / std::fabs(ref.a_bar[i]));
      if (std::fabs(ref.b_bar[i]) > 1e-12)
        worst = std::max(worst, std::fabs(z.b_bar[i] - ref.b_bar[i]) / std::fabs(ref.b_bar[i]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("sequential scan reproduces the hand-unrolled recurrence") {
  const auto steps = lti_steps(scalar_step(0.5, 0.5, 1.0), 3);
  const Tensor x({3, 1}, {1.0, 1.0, 1.0});
  const ScanResult r = ssm_scan_sequential(steps, x, Tensor({1, 1}));
  CHECK(r.y[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.y[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.y[2] == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(r.h_last[0] == doctest::Approx(0.875).epsilon(1e-15));
}

TEST_CASE("zero input and zero state stay zero") {
  const auto steps = lti_steps(scalar_step(0.7, 0.3, 1.2), 5);
  const ScanResult r = ssm_scan_sequential(steps, Tensor({5, 1}), Tensor({1, 1}));
  for (long long i = 0; i < r.y.size(); ++i) CHECK(r.y[i] == 0.0);
}

TEST_CASE("scan rejects length mismatch") {
  const auto steps = lti_steps(scalar_step(0.5, 0.5, 1.0), 3);
  CHECK_THROWS_AS(ssm_scan_sequential(steps, Tensor({4, 1}), Tensor({1, 1})), ValidationError);
}

TEST_CASE("convolution kernel of the scalar example is geometric") {
  const Tensor k = conv_kernel(scalar_step(0.5, 0.5, 1.0), 3);
  CHECK(k[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(k[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(k[2] == doctest::Approx(0.125).epsilon(1e-15));
  const Tensor y = conv_kernel_apply(scalar_step(0.5, 0.5, 1.0), Tensor({3, 1}, {1, 1, 1}));
  CHECK(y[2] == doctest::Approx(0.875).epsilon(1e-15));
}

TEST_CASE("recurrence/convolution duality on random LTI draws") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 1 + static_cast<int>(rng.next_below(3));
    const int s = 1 + static_cast<int>(rng.next_below(4));
    const int len = 64;
    Tensor a_diag({s}), b_vec({s}), c_vec({s}), delta({d});
    for (int i = 0; i < s; ++i) {
      a_diag[i] = -rng.uniform(0.1, 2.0);
      b_vec[i] = rng.uniform(-1.0, 1.0);
      c_vec[i] = rng.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < d; ++i) delta[i] = rng.uniform(0.05, 1.0);
    const DiscretizedStep st = discretize_step(a_diag, b_vec, c_vec, delta);
    Tensor x({len, d});
    for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const ScanResult seq = ssm_scan_sequential(lti_steps(st, len), x, Tensor({d, s}));
    const Tensor conv = conv_kernel_apply(lti_steps(st, len), x);
    double worst = 0.0;
    for (long long i = 0; i < conv.size(); ++i)
      worst = std::max(worst, std::fabs(seq.y[i] - conv[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("convolution form rejects time-varying parameters") {
  auto steps = lti_steps(scalar_step(0.5, 0.5, 1.0), 3);
  steps[1].a_bar[0] = 0.6;
  CHECK_THROWS_AS(conv_kernel_apply(steps, Tensor({3, 1}, {1, 1, 1})), ValidationError);
}

TEST_CASE("selective_params with zero projections gives delta = ln 2 everywhere") {
  SsmParamValues p;
  p.a_log = Tensor({2});
  p.w_dt = Tensor({3, 3});
  p.b_dt = Tensor({3});
  p.w_b = Tensor({2, 3});
  p.b_b = Tensor({2});
  p.w_c = Tensor({2, 3});
  p.b_c = Tensor({2});
  Rng rng(4);
  Tensor x({4, 3});
  for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const auto steps = selective_params(x, p);
  REQUIRE(steps.size() == 4);
  // softplus(0) = ln 2 and A = -exp(0) = -1, so a_bar = 2^{-1} exactly.
  for (const auto& st : steps)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 2; ++k) CHECK(st.a_bar.at(j, k) == doctest::Approx(0.5).epsilon(1e-12));
  // identical steps: selectivity collapses when projections are zero
  for (size_t t = 1; t < steps.size(); ++t)
    for (long long i = 0; i < steps[0].a_bar.size(); ++i)
      CHECK(steps[t].a_bar[i] == steps[0].a_bar[i]);
}

TEST_CASE("selectivity: different inputs give different deltas") {
  Rng rng(5);
  SsmParamValues p = random_ssm_values(3, 2, rng);
  Tensor x({2, 3});
  for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const auto steps = selective_params(x, p);
  bool any_diff = false;
  for (long long i = 0; i < steps[0].a_bar.size(); ++i)
    any_diff = any_diff || steps[0].a_bar[i] != steps[1].a_bar[i];
  CHECK(any_diff);
}

TEST_CASE("parallel scan: L=1 equals a single recurrence step") {
  Rng rng(6);
  SsmParamValues p = random_ssm_values(2, 3, rng);
  Tensor x({1, 2}, {0.3, -0.7});
  const auto steps = selective_params(x, p);
  const ScanResult a = ssm_scan_sequential(steps, x, Tensor({2, 3}));
  const ScanResult b = ssm_scan_parallel(steps, x, Tensor({2, 3}));
  for (long long i = 0; i < a.y.size(); ++i) CHECK(a.y[i] == doctest::Approx(b.y[i]).epsilon(1e-14));
}

TEST_CASE("parallel scan equals sequential scan on random selective draws") {
  Rng rng(7);
  for (int rep = 0; rep < 8; ++rep) {
    const int d = 2, s = 3, len = 128;
    SsmParamValues p = random_ssm_values(d, s, rng);
    Tensor x({len, d});
    for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const auto steps = selective_params(x, p);
    const ScanResult a = ssm_scan_sequential(steps, x, Tensor({d, s}));
    const ScanResult b = ssm_scan_parallel(steps, x, Tensor({d, s}));
    double worst = 0.0;
    for (long long i = 0; i < a.y.size(); ++i)
      worst = std::max(worst, std::fabs(a.y[i] - b.y[i]));
    for (long long i = 0; i < a.h_last.size(); ++i)
      worst = std::max(worst, std::fabs(a.h_last[i] - b.h_last[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("scan element composition algebra") {
  ScanElement f1, f2;
  f1.a = Tensor({1, 1}, {0.5});
  f1.b = Tensor({1, 1}, {2.0});
  f2.a = Tensor({1, 1}, {0.5});
  f2.b = Tensor({1, 1}, {1.0});
  const ScanElement c = compose(f2, f1);  // (0.5,1) after (0.5,2)
  CHECK(c.a[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(c.b[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("stability bound holds for stable systems with bounded input") {
  Rng rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const int d = 2, s = 2, len = 48;
    SsmParamValues p = random_ssm_values(d, s, rng);
    Tensor x({len, d});
    for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const auto steps = selective_params(x, p);
    double max_abar = 0.0, max_bx = 0.0;
    for (int t = 0; t < len; ++t)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < s; ++k) {
          max_abar = std::max(max_abar, steps[static_cast<size_t>(t)].a_bar.at(j, k));
          max_bx = std::max(max_bx,
                            std::fabs(steps[static_cast<size_t>(t)].b_bar.at(j, k) * x.at(t, j)));
        }
    REQUIRE(max_abar < 1.0);
    const double bound = max_bx / (1.0 - max_abar) + 1e-12;
    // check every prefix state against the bound
    Tensor h({d, s});
    for (int t = 0; t < len; ++t) {
      Tensor xt({1, d});
      for (int j = 0; j < d; ++j) xt.at(0, j) = x.at(t, j);
      const ScanResult r =
          ssm_scan_sequential({steps[static_cast<size_t>(t)]}, xt, h);
      h = r.h_last;
      for (long long i = 0; i < h.size(); ++i) CHECK(std::fabs(h[i]) <= bound);
    }
  }
}

TEST_CASE("discretized steps keep a_bar in (0,1) for positive delta") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor a({3}), b({3}), c({3}), delta({2});
    for (int i = 0; i < 3; ++i) {
      a[i] = -rng.uniform(0.05, 3.0);
      b[i] = rng.uniform(-1.0, 1.0);
      c[i] = rng.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < 2; ++i) delta[i] = rng.uniform(1e-4, 2.0);
    const DiscretizedStep st = discretize_step(a, b, c, delta);
    for (long long i = 0; i < st.a_bar.size(); ++i) {
      CHECK(st.a_bar[i] > 0.0);
      CHECK(st.a_bar[i] < 1.0);
    }
  }
}

TEST_CASE("taped selective scan matches the value-level sequential scan") {
  Rng rng(10);
  const int d = 3, s = 2, len = 6;
  SsmParamValues p = random_ssm_values(d, s, rng);
  Tensor x({len, d});
  for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);

  const ScanResult ref = ssm_scan_sequential(selective_params(x, p), x, Tensor({d, s}));

  Tape tape;
  SsmVars v = bind_ssm_values(tape, p, false);
  Var ys = selective_scan_batch(tape, v, tape.constant(x), len, 1);
  for (long long i = 0; i < ref.y.size(); ++i)
    CHECK(tape.value(ys)[i] == doctest::Approx(ref.y[i]).epsilon(1e-12));
}

TEST_CASE("gradients flow through the selective scan block") {
  Rng rng(12);
  const int d = 2, s = 2, len = 4;
  ParamStore store;
  SsmParams params = make_ssm_params(store, "blk", d, s, rng);
  Tensor x({len, d});
  for (long long i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  Tensor target({len, d});
  for (long long i = 0; i < target.size(); ++i) target[i] = rng.uniform(-1.0, 1.0);

  auto fn = [&](Tape& tape) {
    SsmVars v = bind_ssm(params);
    Var ys = selective_scan_batch(tape, v, tape.constant(x), len, 1);
    return tape.mean(tape.abs(tape.sub(ys, tape.constant(target))));
  };
  const GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_err);
  CHECK(report.pass);
}

}  // TEST_SUITE
