#include "damba/delay.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <thread>

#include "damba/error.hpp"

namespace damba {

namespace {

double pearson(const double* x, const double* y, int n) {
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return -std::numeric_limits<double>::infinity();
  return sxy / std::sqrt(sxx * syy);
}

int env_thread_cap() {
  const char* s = std::getenv("DAMBA_THREADS");
  if (s != nullptr) {
    const long v = std::strtol(s, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 4u));
}

}  // namespace

int estimate_delay(const Tensor& xa, const Tensor& xb, int max_lag) {
  require(xa.rank() == 2 && xb.rank() == 2, "estimate_delay: series must be (T,C)");
  require(xa.dim(0) == xb.dim(0), "estimate_delay: series lengths differ");
  require(max_lag >= 0, "estimate_delay: max_lag must be non-negative");
  const int t = xa.dim(0);
  require(t > 2 * max_lag, msg("estimate_delay: need T > 2*max_lag, got T=", t));

  const int ca = xa.dim(1);
  const int cb = xb.dim(1);
  std::vector<double> a(static_cast<size_t>(t)), b(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) {
    a[static_cast<size_t>(i)] = xa[static_cast<size_t>(i) * ca];  // main channel
    b[static_cast<size_t>(i)] = xb[static_cast<size_t>(i) * cb];
  }

  int best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int lag = 0; lag <= max_lag; ++lag) {
    const int n = t - lag;
    const double c = pearson(a.data(), b.data() + lag, n);
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  return best_lag;
}

int DelayMatrix::lag(int a, int b) const {
  auto it = lags.find({a, b});
  require(it != lags.end(), msg("delay undefined for pair (", a, ",", b, ")"));
  return it->second;
}

DelayMatrix build_delay_matrix(const TrafficGraph& g, const Tensor& series, int max_lag) {
  require(series.rank() == 3 && series.dim(1) == g.n,
          msg("build_delay_matrix: series must be (T,", g.n, ",C), got ", series.shape_str()));
  const int t = series.dim(0), c = series.dim(2);

  auto node_series = [&](int v) {
    Tensor s({t, c});
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j) s.at(i, j) = series.at(i, v, j);
    return s;
  };

  std::vector<std::pair<int, int>> pairs;
  for (const auto& e : g.edges) {
    pairs.emplace_back(e.src, e.dst);
    if (e.src != e.dst) pairs.emplace_back(e.dst, e.src);
  }

  std::vector<int> results(pairs.size(), 0);
  const int cap = env_thread_cap();
  const int workers = std::max(1, std::min<int>(cap, static_cast<int>(pairs.size())));
  auto run_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      const Tensor sa = node_series(pairs[i].first);
      const Tensor sb = node_series(pairs[i].second);
      results[i] = estimate_delay(sa, sb, max_lag);
    }
  };
  if (workers <= 1) {
    run_range(0, pairs.size());
  } else {
    std::vector<std::thread> threads;
    const size_t chunk = (pairs.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const size_t lo = static_cast<size_t>(w) * chunk;
      const size_t hi = std::min(pairs.size(), lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(run_range, lo, hi);
    }
    for (auto& th : threads) th.join();
  }

  DelayMatrix m;
  m.n = g.n;
  m.max_lag = max_lag;
  for (size_t i = 0; i < pairs.size(); ++i) m.lags[pairs[i]] = results[i];
  return m;
}

void save_delay_csv(const DelayMatrix& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), msg("cannot write delay cache: ", path));
  out << "src,dst,lag\n";
  for (const auto& [key, lag] : m.lags) out << key.first << "," << key.second << "," << lag << "\n";
}

DelayMatrix load_delay_csv(const std::string& path, int n, int max_lag) {
  std::ifstream in(path);
  require(in.good(), msg("cannot read delay cache: ", path));
  DelayMatrix m;
  m.n = n;
  m.max_lag = max_lag;
  std::string line;
  std::getline(in, line);  // header
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    int a, b, lag;
    if (std::sscanf(line.c_str(), "%d,%d,%d", &a, &b, &lag) != 3)
      throw ValidationError(msg("delay cache ", path, ": bad row at line ", lineno));
    require(a >= 0 && a < n && b >= 0 && b < n, msg("delay cache node out of range, line ", lineno));
    require(std::abs(lag) <= max_lag, msg("delay cache lag exceeds max_lag, line ", lineno));
    m.lags[{a, b}] = lag;
  }
  return m;
}

TimestampFeatures timestamp_features(int total_steps, int steps_per_day, int start_step) {
  require(steps_per_day >= 1, "timestamp_features: steps_per_day must be >= 1");
  TimestampFeatures f;
  f.t_day = Tensor({total_steps});
  f.t_week = Tensor({total_steps});
  for (int i = 0; i < total_steps; ++i) {
    const int t = start_step + i;
    f.t_day[i] = static_cast<double>(t % steps_per_day) / steps_per_day;
    f.t_week[i] = static_cast<double>((t / steps_per_day) % 7) / 7.0;
  }
  return f;
}

DelayAdjusterValues random_delay_adjuster(int hidden, Rng& rng) {
  DelayAdjusterValues adj;
  adj.w1 = Tensor({hidden, 2});
  adj.b1 = Tensor({hidden});
  adj.w2 = Tensor({1, hidden});
  adj.b2 = Tensor({1});
  const double s1 = 1.0 / std::sqrt(2.0);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (long long i = 0; i < adj.w1.size(); ++i) adj.w1[i] = rng.uniform(-1.0, 1.0) * s1;
  for (long long i = 0; i < adj.w2.size(); ++i) adj.w2[i] = rng.uniform(-1.0, 1.0) * s2;
  return adj;
}

double adjuster_offset(const DelayAdjusterValues& adj, double t_day, double t_week) {
  const int h = adj.w1.dim(0);
  double out = adj.b2[0];
  for (int i = 0; i < h; ++i) {
    const double z = adj.w1.at(i, 0) * t_day + adj.w1.at(i, 1) * t_week + adj.b1[i];
    out += adj.w2.at(0, i) * std::tanh(z);
  }
  return out;
}

Var adjuster_offset_var(Tape& tape, Var w1, Var b1, Var w2, Var b2, double t_day, double t_week) {
  Var t = tape.constant(Tensor({1, 2}, {t_day, t_week}));
  Var hid = tape.tanh(tape.linear(t, w1, b1));  // (1,H)
  return tape.linear(hid, w2, b2);              // (1,1)
}

DelayMatrix adjust_delay(const DelayMatrix& base, const DelayAdjusterValues& adj, double t_day,
                         double t_week) {
  const double offset = adjuster_offset(adj, t_day, t_week);
  require(std::isfinite(offset), "adjust_delay: non-finite offset");
  const int delta = static_cast<int>(std::nearbyint(offset));
  DelayMatrix out;
  out.n = base.n;
  out.max_lag = base.max_lag;
  for (const auto& [key, lag] : base.lags) {
    int v = lag + delta;
    v = std::max(0, std::min(base.max_lag, v));
    out.lags[key] = v;
  }
  return out;
}

DelaySequenceIndex st_delay_scan_indices(const std::vector<int>& path, int start_patch,
                                         int seq_len, int patch_len, int patches_per_node,
                                         const DelayMatrix& tau_eff) {
  require(!path.empty(), "st_delay_scan: empty path");
  require(seq_len >= 2, "st_delay_scan: sequence length must be >= 2");
  require(start_patch >= 0 && start_patch < patches_per_node,
          msg("st_delay_scan: start patch ", start_patch, " out of [0,", patches_per_node, ")"));
  require(patch_len >= 1, "st_delay_scan: patch_len must be >= 1");

  DelaySequenceIndex seq;
  const int slots = seq_len - 1;  // adapter takes the final position
  int node = path[0];
  int patch = start_patch;
  seq.token_index.push_back(node * patches_per_node + patch);
  seq.origin.push_back({node, patch, false});
  size_t hop = 1;
  while (static_cast<int>(seq.token_index.size()) < slots) {
    if (hop < path.size()) {
      const int next = path[hop];
      const int lag = tau_eff.lag(node, next);
      const int next_patch = patch + lag / patch_len;
      ++hop;
      if (next_patch < patches_per_node) {
        node = next;
        patch = next_patch;
        seq.token_index.push_back(node * patches_per_node + patch);
        seq.origin.push_back({node, patch, false});
        continue;
      }
      // Patch index overflow: stop walking, fall through to padding.
      hop = path.size();
    }
    // Path exhausted or overflowed: repeat the final reachable patch.
    seq.token_index.push_back(node * patches_per_node + patch);
    seq.origin.push_back({node, patch, false});
  }
  seq.token_index.push_back(tau_eff.n * patches_per_node);  // adapter row after all patches
  seq.origin.push_back({-1, -1, true});
  return seq;
}

ScanSequence st_delay_scan(const Tensor& patches, const std::vector<int>& path, int start_patch,
                           int seq_len, int patch_len, const DelayMatrix& tau_eff,
                           const Tensor& adapter) {
  require(patches.rank() == 3, "st_delay_scan: patches must be (Lp,N,D)");
  const int lp = patches.dim(0), n = patches.dim(1), d = patches.dim(2);
  require(adapter.rank() == 1 && adapter.dim(0) == d, "st_delay_scan: adapter dim mismatch");
  for (int v : path) require(v >= 0 && v < n, msg("st_delay_scan: node ", v, " out of range"));

  const DelaySequenceIndex idx =
      st_delay_scan_indices(path, start_patch, seq_len, patch_len, lp, tau_eff);
  ScanSequence seq;
  seq.tokens = Tensor({seq_len, d});
  seq.origin = idx.origin;
  for (int i = 0; i < seq_len; ++i) {
    const TokenOrigin& o = idx.origin[static_cast<size_t>(i)];
    if (o.adapter) {
      for (int j = 0; j < d; ++j) seq.tokens.at(i, j) = adapter[j];
    } else {
      for (int j = 0; j < d; ++j) seq.tokens.at(i, j) = patches.at(o.patch, o.node, j);
    }
  }
  return seq;
}

}  // namespace damba
