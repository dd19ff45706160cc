#pragma once

#include <vector>

#include "damba/graph.hpp"
#include "damba/tensor.hpp"

namespace damba {

// Where a sequence position came from: a node, a patch slot, or an adapter.
struct TokenOrigin {
  int node = -1;
  int patch = -1;
  bool adapter = false;
};

// A standardized token sequence with provenance back to (node, patch).
struct ScanSequence {
  Tensor tokens;  // (L, D)
  std::vector<TokenOrigin> origin;
};

// Laplacian positional features for a graph: the k smallest non-trivial
// eigenvectors, orthonormal and sign-fixed. k is clipped to the available
// non-trivial count.
Tensor laplacian_positional_encoding(const TrafficGraph& g, int k);

// Sequence indices into a token table laid out as [N node rows; adapter row].
// Forward: adapter, path nodes, adapter. Backward reverses the interior.
std::vector<int> spatial_sequence_indices(const std::vector<int>& path, int adapter_row,
                                          bool backward);

struct SpatialScanPair {
  ScanSequence forward;
  ScanSequence backward;
};

// Eq-style bidirectional sequences: the adapter is attached to both ends of
// the node-representation path.
SpatialScanPair bidirectional_spatial_scan(const std::vector<int>& path,
                                           const Tensor& node_reps, const Tensor& adapter);

}  // namespace damba
