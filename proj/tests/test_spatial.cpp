#include <doctest.h>

#include <cmath>
#include <map>

#include "damba/error.hpp"
#include "damba/graph.hpp"
#include "damba/spatial.hpp"
#include "oracles.hpp"

using namespace damba;

namespace {

TrafficGraph cycle_graph(int n) {
  Tensor adj({n, n});
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    adj.at(i, j) = 1.0;
    adj.at(j, i) = 1.0;
  }
  return TrafficGraph::from_adjacency(std::move(adj));
}

Tensor random_symmetric(int n, Rng& rng) {
  Tensor m({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) m.at(i, j) = m.at(j, i) = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_SUITE("spatial") {

TEST_CASE("normalized laplacian of a single unit edge") {
  Tensor adj({2, 2}, {0, 1, 1, 0});
  const Tensor lap = normalized_laplacian(TrafficGraph::from_adjacency(std::move(adj)));
  CHECK(lap.at(0, 0) == doctest::Approx(1.0));
  CHECK(lap.at(0, 1) == doctest::Approx(-1.0));
  CHECK(lap.at(1, 0) == doctest::Approx(-1.0));
  CHECK(lap.at(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("normalized laplacian of K3") {
  Tensor adj({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) adj.at(i, j) = 1.0;
  const Tensor lap = normalized_laplacian(TrafficGraph::from_adjacency(std::move(adj)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(lap.at(i, j) == doctest::Approx(i == j ? 1.0 : -0.5).epsilon(1e-12));
}

TEST_CASE("isolated node is rejected") {
  Tensor adj({3, 3});
  adj.at(0, 1) = adj.at(1, 0) = 1.0;  // node 2 isolated
  CHECK_THROWS_AS(TrafficGraph::from_adjacency(std::move(adj)), ValidationError);
}

TEST_CASE("cycle graph spectrum matches the circulant closed form") {
  for (int n : {4, 8, 16}) {
    const Tensor lap = normalized_laplacian(cycle_graph(n));
    const EigResult full = jacobi_eigs(lap);
    std::vector<double> expected;
    for (int k = 0; k < n; ++k) expected.push_back(1.0 - std::cos(2.0 * M_PI * k / n));
    std::sort(expected.begin(), expected.end());
    for (int i = 0; i < n; ++i)
      CHECK(std::fabs(full.values[i] - expected[static_cast<size_t>(i)]) < 1e-8);
  }
}

TEST_CASE("two-node laplacian eigs: k=1 gives the sign-fixed split mode") {
  Tensor adj({2, 2}, {0, 1, 1, 0});
  const Tensor lap = normalized_laplacian(TrafficGraph::from_adjacency(std::move(adj)));
  const EigResult e = laplacian_eigs(lap, 1);
  CHECK(e.values[0] == doctest::Approx(2.0).epsilon(1e-10));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(e.vectors.at(0, 0) == doctest::Approx(inv_sqrt2).epsilon(1e-10));
  CHECK(e.vectors.at(1, 0) == doctest::Approx(-inv_sqrt2).epsilon(1e-10));
}

TEST_CASE("identity matrix: degenerate spectrum passes the residual check") {
  Tensor eye({5, 5});
  for (int i = 0; i < 5; ++i) eye.at(i, i) = 1.0;
  const EigResult e = laplacian_eigs(eye, 3);
  REQUIRE(e.values.dim(0) == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(e.values[c] == doctest::Approx(1.0).epsilon(1e-12));
    double res = 0.0;
    for (int r = 0; r < 5; ++r) {
      double av = 0.0;
      for (int k = 0; k < 5; ++k) av += eye.at(r, k) * e.vectors.at(k, c);
      res += (av - e.values[c] * e.vectors.at(r, c)) * (av - e.values[c] * e.vectors.at(r, c));
    }
    CHECK(std::sqrt(res) < 1e-8);
  }
}

TEST_CASE("k >= N is a contract error") {
  Tensor adj({2, 2}, {0, 1, 1, 0});
  const Tensor lap = normalized_laplacian(TrafficGraph::from_adjacency(std::move(adj)));
  CHECK_THROWS_AS(laplacian_eigs(lap, 2), ValidationError);
}

TEST_CASE("jacobi eigenvalues match the Sturm bisection oracle") {
  Rng rng(77);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor m = random_symmetric(10, rng);
    const EigResult jac = jacobi_eigs(m);
    const std::vector<double> ref = oracle::sturm_eigenvalues(m);
    for (int i = 0; i < 10; ++i)
      CHECK(std::fabs(jac.values[i] - ref[static_cast<size_t>(i)]) < 1e-6);
  }
}

TEST_CASE("eigenvectors are orthonormal with small residuals, deterministically") {
  Rng rng(78);
  const int n = 12, k = 5;
  Tensor base = random_symmetric(n, rng);
  for (int i = 0; i < n; ++i) base.at(i, i) += 4.0;
  const EigResult a = laplacian_eigs(base, k);
  const EigResult b = laplacian_eigs(base, k);
  for (long long i = 0; i < a.vectors.size(); ++i) CHECK(a.vectors[i] == b.vectors[i]);

  for (int c1 = 0; c1 < k; ++c1)
    for (int c2 = 0; c2 < k; ++c2) {
      double dot = 0.0;
      for (int r = 0; r < n; ++r) dot += a.vectors.at(r, c1) * a.vectors.at(r, c2);
      CHECK(std::fabs(dot - (c1 == c2 ? 1.0 : 0.0)) < 1e-8);
    }
  for (int c = 0; c < k; ++c) {
    double res = 0.0;
    for (int r = 0; r < n; ++r) {
      double av = 0.0;
      for (int q = 0; q < n; ++q) av += base.at(r, q) * a.vectors.at(q, c);
      const double diff = av - a.values[c] * a.vectors.at(r, c);
      res += diff * diff;
    }
    CHECK(std::sqrt(res) < 1e-8);
  }
}

TEST_CASE("laplacian positional encoding drops the trivial mode") {
  const TrafficGraph g = cycle_graph(6);
  const Tensor lap = normalized_laplacian(g);
  const EigResult e = laplacian_eigs(lap, 3);
  for (int c = 0; c < 3; ++c) CHECK(e.values[c] > 1e-8);
}

TEST_CASE("random walk on a self-loop stays put") {
  Tensor adj({1, 1}, {1.0});
  const TrafficGraph g = TrafficGraph::from_adjacency(std::move(adj), true);
  Rng rng(1);
  const auto paths = random_walk_paths(g, 5, rng);
  REQUIRE(paths.size() == 1);
  for (int v : paths[0]) CHECK(v == 0);
}

TEST_CASE("random walk on a forced two-node graph alternates") {
  Tensor adj({2, 2}, {0, 1, 1, 0});
  const TrafficGraph g = TrafficGraph::from_adjacency(std::move(adj));
  Rng rng(2);
  const auto paths = random_walk_paths(g, 6, rng);
  CHECK(paths[0] == std::vector<int>{0, 1, 0, 1, 0, 1});
  CHECK(paths[1] == std::vector<int>{1, 0, 1, 0, 1, 0});
}

TEST_CASE("star-graph walks visit leaves uniformly within 3 sigma") {
  const int leaves = 8;
  Tensor adj({leaves + 1, leaves + 1});
  for (int l = 1; l <= leaves; ++l) {
    adj.at(0, l) = 1.0;
    adj.at(l, 0) = 1.0;
  }
  const TrafficGraph g = TrafficGraph::from_adjacency(std::move(adj));
  Rng rng(3);
  std::map<int, int> counts;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto paths = random_walk_paths(g, 2, rng);
    counts[paths[0][1]] += 1;  // first hop from the hub
  }
  const double p = 1.0 / leaves;
  const double sigma = std::sqrt(trials * p * (1.0 - p));
  for (int l = 1; l <= leaves; ++l) {
    CAPTURE(l);
    CHECK(std::fabs(counts[l] - trials * p) <= 3.0 * sigma);
  }
}

TEST_CASE("walks are reproducible bit-for-bit under a fixed seed") {
  const TrafficGraph g = cycle_graph(7);
  Rng r1(99), r2(99);
  CHECK(random_walk_paths(g, 10, r1) == random_walk_paths(g, 10, r2));
}

TEST_CASE("bidirectional scan attaches the adapter at both ends") {
  Tensor reps({3, 2}, {10, 11, 20, 21, 30, 31});
  Tensor adapter({2}, {1, 2});
  const SpatialScanPair pair = bidirectional_spatial_scan({0, 1}, reps, adapter);

  REQUIRE(pair.forward.tokens.dim(0) == 4);
  CHECK(pair.forward.tokens.at(0, 0) == 1.0);   // adapter
  CHECK(pair.forward.tokens.at(1, 0) == 10.0);  // s_a
  CHECK(pair.forward.tokens.at(2, 0) == 20.0);  // s_b
  CHECK(pair.forward.tokens.at(3, 0) == 1.0);   // adapter
  CHECK(pair.backward.tokens.at(1, 0) == 20.0);
  CHECK(pair.backward.tokens.at(2, 0) == 10.0);
  CHECK(pair.forward.origin[0].adapter);
  CHECK(pair.forward.origin[1].node == 0);
  CHECK(pair.backward.origin[1].node == 1);

  // reversing the backward interior recovers the forward interior
  const int len = pair.forward.tokens.dim(0);
  for (int p = 1; p < len - 1; ++p)
    for (int j = 0; j < 2; ++j)
      CHECK(pair.backward.tokens.at(len - 1 - p, j) == pair.forward.tokens.at(p, j));
}

TEST_CASE("bidirectional scan of an empty path degenerates to two adapters") {
  Tensor reps({2, 2}, {5, 6, 7, 8});
  Tensor adapter({2}, {1, 2});
  const SpatialScanPair pair = bidirectional_spatial_scan({}, reps, adapter);
  REQUIRE(pair.forward.tokens.dim(0) == 2);
  CHECK(pair.forward.tokens.at(0, 0) == 1.0);
  CHECK(pair.forward.tokens.at(1, 0) == 1.0);
  CHECK(pair.backward.tokens.dim(0) == 2);
}

TEST_CASE("every scan sequence has adapters exactly first and last") {
  Rng rng(5);
  const TrafficGraph g = cycle_graph(9);
  Rng wrng(6);
  const auto paths = random_walk_paths(g, 4, wrng);
  Tensor reps({9, 3});
  for (long long i = 0; i < reps.size(); ++i) reps[i] = rng.uniform(-1.0, 1.0);
  Tensor adapter({3}, {9, 9, 9});
  for (const auto& path : paths) {
    const SpatialScanPair pair = bidirectional_spatial_scan(path, reps, adapter);
    const auto& org = pair.forward.origin;
    CHECK(org.front().adapter);
    CHECK(org.back().adapter);
    int adapters = 0;
    for (const auto& o : org) adapters += o.adapter ? 1 : 0;
    CHECK(adapters == 2);
    CHECK(static_cast<int>(org.size()) == 4 + 2);
  }
}

}  // TEST_SUITE
