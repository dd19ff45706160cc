#include <doctest.h>

#include <cmath>

#include "damba/error.hpp"
#include "damba/grad_check.hpp"
#include "damba/ssm.hpp"
#include "damba/temporal.hpp"
#include "oracles.hpp"

using namespace damba;

TEST_SUITE("temporal") {

TEST_CASE("revin z-scores a short series") {
  const Tensor series({3, 1}, {1.0, 2.0, 3.0});
  const auto [norm, state] = revin_normalize(series);
  CHECK(norm[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(norm[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(norm[2] == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(state.mean[0] == doctest::Approx(2.0));
}

TEST_CASE("revin clamps constant channels to zero") {
  const Tensor series({3, 1}, {5.0, 5.0, 5.0});
  const auto [norm, state] = revin_normalize(series);
  for (long long i = 0; i < norm.size(); ++i) CHECK(norm[i] == doctest::Approx(0.0));
  CHECK(state.std[0] == doctest::Approx(1e-5));
}

TEST_CASE("revin round trip is exact to 1e-12") {
  Rng rng(1);
  Tensor series({40, 3});
  for (long long i = 0; i < series.size(); ++i) series[i] = rng.uniform(-5.0, 5.0);
  const auto [norm, state] = revin_normalize(series);
  const Tensor back = revin_denormalize(norm, state);
  for (long long i = 0; i < series.size(); ++i) CHECK(std::fabs(back[i] - series[i]) < 1e-12);
}

TEST_CASE("revin denormalize hand cases") {
  RevinState st;
  st.mean = Tensor({1}, {2.0});
  st.std = Tensor({1}, {3.0});
  const Tensor zeros({4, 1});
  const Tensor out = revin_denormalize(zeros, st);
  for (long long i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(2.0));

  RevinState ident;
  ident.mean = Tensor({1}, {0.0});
  ident.std = Tensor({1}, {1.0});
  const Tensor ones = Tensor::full({4, 1}, 1.0);
  const Tensor same = revin_denormalize(ones, ident);
  for (long long i = 0; i < same.size(); ++i) CHECK(same[i] == doctest::Approx(1.0));
}

TEST_CASE("revin denormalize rejects channel mismatch") {
  RevinState st;
  st.mean = Tensor({2}, {0.0, 0.0});
  st.std = Tensor({2}, {1.0, 1.0});
  CHECK_THROWS_AS(revin_denormalize(Tensor({3, 1}), st), ValidationError);
}

TEST_CASE("revin requires at least two steps") {
  CHECK_THROWS_AS(revin_normalize(Tensor({1, 1}, {3.0})), ValidationError);
}

TEST_CASE("patch count formula: the paper's configuration gives 24") {
  CHECK(patch_count(288, 12, 12) == 24);
  CHECK(patch_count(12, 12, 12) == 1);
}

TEST_CASE("patch count matches enumeration over random shapes") {
  Rng rng(2);
  for (int rep = 0; rep < 300; ++rep) {
    const int p = 1 + static_cast<int>(rng.next_below(20));
    const int s = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(p)));
    const int t = p + static_cast<int>(rng.next_below(200));
    CAPTURE(t);
    CAPTURE(p);
    CAPTURE(s);
    CHECK(patch_count(t, p, s) == oracle::count_patches(t, p, s));
  }
}

TEST_CASE("patchify rejects T < P") {
  PatchEmbedding emb;
  emb.weight = Tensor({2, 6});
  emb.bias = Tensor({2});
  emb.patch_len = 6;
  emb.stride = 6;
  CHECK_THROWS_AS(patchify(Tensor({5, 1}), emb), ValidationError);
}

TEST_CASE("identity-like kernel returns raw windows") {
  const int p = 4;
  PatchEmbedding emb;
  emb.patch_len = p;
  emb.stride = p;
  emb.weight = Tensor({p, p});
  for (int i = 0; i < p; ++i) emb.weight.at(i, i) = 1.0;
  emb.bias = Tensor({p});
  Rng rng(3);
  Tensor series({12, 1});
  for (long long i = 0; i < series.size(); ++i) series[i] = rng.uniform(-1.0, 1.0);
  const Tensor tokens = patchify(series, emb);
  REQUIRE(tokens.dim(0) == 3);
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < p; ++i) CHECK(tokens.at(l, i) == series[l * p + i]);
}

TEST_CASE("temporal scan appends exactly one adapter as the last token") {
  Tensor patches({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor adapter({2}, {-1, -2});
  const ScanSequence seq = temporal_scan(patches, adapter);
  REQUIRE(seq.tokens.dim(0) == 4);
  CHECK(seq.tokens.at(3, 0) == -1.0);
  CHECK(seq.tokens.at(3, 1) == -2.0);
  CHECK(seq.origin[3].adapter);
  int adapters = 0;
  for (const auto& o : seq.origin) adapters += o.adapter ? 1 : 0;
  CHECK(adapters == 1);
  for (int p = 0; p < 3; ++p) {
    CHECK(seq.origin[static_cast<size_t>(p)].patch == p);
    CHECK(seq.tokens.at(p, 0) == patches.at(p, 0));
  }
}

TEST_CASE("temporal scan of a single patch") {
  Tensor patches({1, 2}, {7, 8});
  Tensor adapter({2}, {0.5, 0.25});
  const ScanSequence seq = temporal_scan(patches, adapter);
  REQUIRE(seq.tokens.dim(0) == 2);
  CHECK(seq.tokens.at(0, 0) == 7.0);
  CHECK(seq.tokens.at(1, 1) == 0.25);
}

TEST_CASE("adapter gradient flows through a loss on the final position") {
  Rng rng(4);
  const int d = 3, lp = 2;
  ParamStore store;
  Param& adapter = store.create("adapter", Tensor({d}, {0.1, -0.2, 0.3}));
  SsmParams ssm = make_ssm_params(store, "ssm", d, 2, rng);
  Tensor patches({lp, d});
  for (long long i = 0; i < patches.size(); ++i) patches[i] = rng.uniform(-1.0, 1.0);

  auto fn = [&](Tape& tape) {
    Var seq = tape.concat_rows(
        {tape.constant(patches), tape.reshape(adapter.bound, {1, d})});
    Var ys = selective_scan_batch(tape, bind_ssm(ssm), seq, lp + 1, 1);
    Var last = tape.slice_rows(ys, lp, 1);
    return tape.sum(tape.mul(last, last));
  };
  const GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_err);
  CHECK(report.pass);

  // and the adapter gradient is actually non-zero
  Tape tape;
  store.bind_all(tape);
  Var root = fn(tape);
  tape.backward(root);
  double norm = 0.0;
  for (long long i = 0; i < d; ++i) norm += std::fabs(tape.grad(adapter.bound)[i]);
  CHECK(norm > 1e-8);
}

}  // TEST_SUITE
