#pragma once

#include <vector>

#include "damba/rng.hpp"
#include "damba/tensor.hpp"

namespace damba {

// Weighted undirected sensor graph. The adjacency is symmetric with
// non-negative weights; every node must have positive degree.
struct TrafficGraph {
  int n = 0;
  Tensor adjacency;  // (n,n)

  struct Edge {
    int src, dst;
    double weight;
  };
  std::vector<Edge> edges;  // src < dst, one entry per undirected edge

  static TrafficGraph from_adjacency(Tensor adj, bool allow_self_loops = false);

  double degree(int v) const;
  std::vector<int> neighbors(int v) const;
};

// I - D^{-1/2} A D^{-1/2}; rejects isolated nodes.
Tensor normalized_laplacian(const TrafficGraph& g);

struct EigResult {
  Tensor values;   // (k) ascending
  Tensor vectors;  // (n,k), columns orthonormal, sign-fixed
};

// k smallest non-trivial eigenpairs (eigenvalue > 1e-8) of a symmetric
// matrix via cyclic Jacobi rotations. Sign convention: the first component
// of each eigenvector with magnitude above 1e-9 is made positive, so the
// decomposition is deterministic. Requires k < n.
EigResult laplacian_eigs(const Tensor& sym, int k);

// Full Jacobi eigendecomposition, ascending eigenvalues (no trivial filter).
EigResult jacobi_eigs(const Tensor& sym);

// One weighted random walk per start node; each path holds `length` node
// ids beginning at its start node. A node whose only option is itself
// stays in place.
std::vector<std::vector<int>> random_walk_paths(const TrafficGraph& g, int length, Rng& rng);

}  // namespace damba
