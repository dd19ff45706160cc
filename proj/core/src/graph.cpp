#include "damba/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "damba/error.hpp"

namespace damba {

TrafficGraph TrafficGraph::from_adjacency(Tensor adj, bool allow_self_loops) {
  require(adj.rank() == 2 && adj.dim(0) == adj.dim(1),
          msg("adjacency must be square, got ", adj.shape_str()));
  const int n = adj.dim(0);
  require(n >= 1, "adjacency must have at least one node");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = adj.at(i, j);
      require(std::isfinite(w) && w >= 0.0, msg("adjacency weight (", i, ",", j, ") invalid"));
      require(adj.at(i, j) == adj.at(j, i),
              msg("adjacency not symmetric at (", i, ",", j, ")"));
      if (i == j)
        require(allow_self_loops || w == 0.0, msg("self-loop at node ", i, " not declared"));
    }
  TrafficGraph g;
  g.n = n;
  g.adjacency = std::move(adj);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (g.adjacency.at(i, j) > 0.0) g.edges.push_back({i, j, g.adjacency.at(i, j)});
  for (int v = 0; v < n; ++v)
    require(g.degree(v) > 0.0, msg("node ", v, " has zero degree"));
  return g;
}

double TrafficGraph::degree(int v) const {
  double d = 0.0;
  for (int j = 0; j < n; ++j) d += adjacency.at(v, j);
  return d;
}

std::vector<int> TrafficGraph::neighbors(int v) const {
  std::vector<int> out;
  for (int j = 0; j < n; ++j)
    if (adjacency.at(v, j) > 0.0) out.push_back(j);
  return out;
}

Tensor normalized_laplacian(const TrafficGraph& g) {
  const int n = g.n;
  std::vector<double> dinv_sqrt(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) {
    const double d = g.degree(v);
    require(d > 0.0, msg("normalized_laplacian: node ", v, " is isolated"));
    dinv_sqrt[static_cast<size_t>(v)] = 1.0 / std::sqrt(d);
  }
  Tensor lap({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double a = g.adjacency.at(i, j);
      lap.at(i, j) = (i == j ? 1.0 : 0.0) -
                     dinv_sqrt[static_cast<size_t>(i)] * a * dinv_sqrt[static_cast<size_t>(j)];
    }
  return lap;
}

namespace {

// Cyclic Jacobi on a symmetric matrix. Stops when the off-diagonal
// Frobenius mass drops below 1e-12 or after 100 sweeps.
void jacobi_rotate(Tensor& a, Tensor& v, int n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (std::sqrt(2.0 * off) < 1e-12) return;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }
}

void fix_sign(Tensor& vectors, int col) {
  const int n = vectors.dim(0);
  for (int i = 0; i < n; ++i) {
    const double x = vectors.at(i, col);
    if (std::fabs(x) > 1e-9) {
      if (x < 0.0)
        for (int r = 0; r < n; ++r) vectors.at(r, col) = -vectors.at(r, col);
      return;
    }
  }
}

}  // namespace

EigResult jacobi_eigs(const Tensor& sym) {
  require(sym.rank() == 2 && sym.dim(0) == sym.dim(1), "jacobi_eigs: square matrix required");
  const int n = sym.dim(0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      require(std::fabs(sym.at(i, j) - sym.at(j, i)) < 1e-12,
              msg("jacobi_eigs: matrix not symmetric at (", i, ",", j, ")"));
  Tensor a = sym;
  Tensor v({n, n});
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;
  jacobi_rotate(a, v, n);

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return a.at(x, x) < a.at(y, y); });

  EigResult out;
  out.values = Tensor({n});
  out.vectors = Tensor({n, n});
  for (int c = 0; c < n; ++c) {
    out.values[c] = a.at(order[static_cast<size_t>(c)], order[static_cast<size_t>(c)]);
    for (int r = 0; r < n; ++r)
      out.vectors.at(r, c) = v.at(r, order[static_cast<size_t>(c)]);
    fix_sign(out.vectors, c);
  }
  return out;
}

EigResult laplacian_eigs(const Tensor& sym, int k) {
  const int n = sym.dim(0);
  require(k >= 1 && k < n, msg("laplacian_eigs: need 1 <= k < n, got k=", k, " n=", n));
  EigResult full = jacobi_eigs(sym);

  // Drop trivial (near-zero) eigenpairs, one per connected component.
  int first = 0;
  while (first < n && full.values[first] <= 1e-8) ++first;
  const int avail = n - first;
  const int kk = std::min(k, avail);
  require(kk >= 1, "laplacian_eigs: no non-trivial eigenpairs");

  EigResult out;
  out.values = Tensor({kk});
  out.vectors = Tensor({n, kk});
  for (int c = 0; c < kk; ++c) {
    out.values[c] = full.values[first + c];
    for (int r = 0; r < n; ++r) out.vectors.at(r, c) = full.vectors.at(r, first + c);
  }
  return out;
}

std::vector<std::vector<int>> random_walk_paths(const TrafficGraph& g, int length, Rng& rng) {
  require(length >= 1, "random_walk_paths: length must be >= 1");
  std::vector<std::vector<int>> paths;
  paths.reserve(static_cast<size_t>(g.n));
  for (int start = 0; start < g.n; ++start) {
    std::vector<int> path;
    path.reserve(static_cast<size_t>(length));
    int cur = start;
    path.push_back(cur);
    while (static_cast<int>(path.size()) < length) {
      double total = 0.0;
      for (int j = 0; j < g.n; ++j) total += g.adjacency.at(cur, j);
      if (total <= 0.0) {
        path.push_back(cur);  // dead end: stay in place
        continue;
      }
      const double u = rng.uniform() * total;
      double acc = 0.0;
      int next = cur;
      for (int j = 0; j < g.n; ++j) {
        const double w = g.adjacency.at(cur, j);
        if (w <= 0.0) continue;
        acc += w;
        if (u < acc) {
          next = j;
          break;
        }
      }
      cur = next;
      path.push_back(cur);
    }
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace damba
