#pragma once

#include <utility>
#include <vector>

#include "damba/spatial.hpp"
#include "damba/tensor.hpp"

namespace damba {

// Per-channel statistics captured at normalization time. Population standard
// deviation with a floor of epsilon, so constant channels normalize to zero.
struct RevinState {
  Tensor mean;  // (C)
  Tensor std;   // (C), >= epsilon
  double epsilon = 1e-5;
};

std::pair<Tensor, RevinState> revin_normalize(const Tensor& series, double epsilon = 1e-5);
Tensor revin_denormalize(const Tensor& pred, const RevinState& state);

// Patch tokenizer: 1-D convolution over flattened windows of length P with
// stride S across all input channels.
struct PatchEmbedding {
  Tensor weight;  // (D, C_in*P)
  Tensor bias;    // (D)
  int patch_len = 0;
  int stride = 0;
};

int patch_count(int total_steps, int patch_len, int stride);
Tensor patchify(const Tensor& series, const PatchEmbedding& emb);  // (L, D)

// Flattened window matrix feeding the patch convolution: row l holds the
// window starting at l*S, channels interleaved per time step.
Tensor patch_windows(const Tensor& series, int patch_len, int stride);  // (L, C_in*P)

// The standardized temporal sequence: the given patches followed by the
// domain adapter as the final token.
ScanSequence temporal_scan(const Tensor& patches, const Tensor& adapter);

}  // namespace damba
