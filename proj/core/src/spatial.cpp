#include "damba/spatial.hpp"

#include <algorithm>

#include "damba/error.hpp"

namespace damba {

Tensor laplacian_positional_encoding(const TrafficGraph& g, int k) {
  require(g.n >= 2, "laplacian encoding needs at least two nodes");
  const Tensor lap = normalized_laplacian(g);
  const int kk = std::min(k, g.n - 1);
  return laplacian_eigs(lap, kk).vectors;
}

std::vector<int> spatial_sequence_indices(const std::vector<int>& path, int adapter_row,
                                          bool backward) {
  std::vector<int> idx;
  idx.reserve(path.size() + 2);
  idx.push_back(adapter_row);
  if (backward)
    for (auto it = path.rbegin(); it != path.rend(); ++it) idx.push_back(*it);
  else
    for (int v : path) idx.push_back(v);
  idx.push_back(adapter_row);
  return idx;
}

SpatialScanPair bidirectional_spatial_scan(const std::vector<int>& path,
                                           const Tensor& node_reps, const Tensor& adapter) {
  require(node_reps.rank() == 2, "node_reps must be (N,D)");
  require(adapter.rank() == 1 && adapter.dim(0) == node_reps.dim(1),
          "adapter dimension must match node representations");
  const int n = node_reps.dim(0);
  const int d = node_reps.dim(1);
  for (int v : path) require(v >= 0 && v < n, msg("path node ", v, " out of range"));

  auto build = [&](bool backward) {
    ScanSequence seq;
    const std::vector<int> idx = spatial_sequence_indices(path, n, backward);
    const int len = static_cast<int>(idx.size());
    seq.tokens = Tensor({len, d});
    seq.origin.resize(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) {
      if (idx[static_cast<size_t>(i)] == n) {
        for (int j = 0; j < d; ++j) seq.tokens.at(i, j) = adapter[j];
        seq.origin[static_cast<size_t>(i)].adapter = true;
      } else {
        const int v = idx[static_cast<size_t>(i)];
        for (int j = 0; j < d; ++j) seq.tokens.at(i, j) = node_reps.at(v, j);
        seq.origin[static_cast<size_t>(i)].node = v;
      }
    }
    return seq;
  };

  SpatialScanPair pair;
  pair.forward = build(false);
  pair.backward = build(true);
  return pair;
}

}  // namespace damba
