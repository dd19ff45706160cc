#include "damba/temporal.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

std::pair<Tensor, RevinState> revin_normalize(const Tensor& series, double epsilon) {
  require(series.rank() == 2, "revin_normalize: series must be (T,C)");
  const int t = series.dim(0), c = series.dim(1);
  require(t >= 2, msg("revin_normalize: need T >= 2, got ", t));
  RevinState st;
  st.epsilon = epsilon;
  st.mean = Tensor({c});
  st.std = Tensor({c});
  for (int j = 0; j < c; ++j) {
    double m = 0.0;
    for (int i = 0; i < t; ++i) m += series.at(i, j);
    m /= t;
    double var = 0.0;
    for (int i = 0; i < t; ++i) {
      const double d = series.at(i, j) - m;
      var += d * d;
    }
    var /= t;  // population variance
    st.mean[j] = m;
    st.std[j] = std::max(std::sqrt(var), epsilon);
  }
  Tensor out({t, c});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = (series.at(i, j) - st.mean[j]) / st.std[j];
  return {std::move(out), std::move(st)};
}

Tensor revin_denormalize(const Tensor& pred, const RevinState& state) {
  require(pred.rank() == 2, "revin_denormalize: pred must be (T,C)");
  require(pred.dim(1) == state.mean.dim(0),
          msg("revin_denormalize: ", pred.dim(1), " channels vs state ", state.mean.dim(0)));
  Tensor out;
  out.resize_like(pred);
  for (int i = 0; i < pred.dim(0); ++i)
    for (int j = 0; j < pred.dim(1); ++j)
      out.at(i, j) = pred.at(i, j) * state.std[j] + state.mean[j];
  return out;
}

int patch_count(int total_steps, int patch_len, int stride) {
  require(patch_len >= stride && stride >= 1,
          msg("patching requires P >= S >= 1, got P=", patch_len, " S=", stride));
  require(total_steps >= patch_len,
          msg("patching requires T >= P, got T=", total_steps, " P=", patch_len));
  return (total_steps - patch_len) / stride + 1;
}

Tensor patch_windows(const Tensor& series, int patch_len, int stride) {
  require(series.rank() == 2, "patch_windows: series must be (T,C)");
  const int t = series.dim(0), c = series.dim(1);
  const int l = patch_count(t, patch_len, stride);
  Tensor win({l, c * patch_len});
  for (int p = 0; p < l; ++p) {
    const int start = p * stride;
    for (int i = 0; i < patch_len; ++i)
      for (int j = 0; j < c; ++j) win.at(p, i * c + j) = series.at(start + i, j);
  }
  return win;
}

Tensor patchify(const Tensor& series, const PatchEmbedding& emb) {
  const int c = series.dim(1);
  require(emb.weight.rank() == 2 && emb.weight.dim(1) == c * emb.patch_len,
          "patchify: embedding width must equal C_in*P");
  const Tensor win = patch_windows(series, emb.patch_len, emb.stride);
  const int l = win.dim(0), d = emb.weight.dim(0), w = win.dim(1);
  Tensor tokens({l, d});
  for (int p = 0; p < l; ++p)
    for (int o = 0; o < d; ++o) {
      double acc = emb.bias[o];
      for (int i = 0; i < w; ++i) acc += emb.weight.at(o, i) * win.at(p, i);
      tokens.at(p, o) = acc;
    }
  return tokens;
}

ScanSequence temporal_scan(const Tensor& patches, const Tensor& adapter) {
  require(patches.rank() == 2 && patches.dim(0) >= 1, "temporal_scan: need at least one patch");
  require(adapter.rank() == 1 && adapter.dim(0) == patches.dim(1),
          "temporal_scan: adapter dimension mismatch");
  const int lp = patches.dim(0), d = patches.dim(1);
  ScanSequence seq;
  seq.tokens = Tensor({lp + 1, d});
  seq.origin.resize(static_cast<size_t>(lp + 1));
  for (int p = 0; p < lp; ++p) {
    for (int j = 0; j < d; ++j) seq.tokens.at(p, j) = patches.at(p, j);
    seq.origin[static_cast<size_t>(p)].patch = p;
  }
  for (int j = 0; j < d; ++j) seq.tokens.at(lp, j) = adapter[j];
  seq.origin[static_cast<size_t>(lp)].adapter = true;
  return seq;
}

}  // namespace damba
