#pragma once

#include <string>
#include <vector>

#include "damba/graph.hpp"
#include "damba/tensor.hpp"

namespace damba {

enum class GraphFamily { kCycle, kGrid, kGeometric };
GraphFamily graph_family_from_string(const std::string& s);
std::string to_string(GraphFamily f);

// Heterogeneity knobs for one synthetic domain: volume (amplitude), period,
// trend, and propagation timescale (edge delay) map to the axes a real
// multi-city corpus would vary.
struct DomainSpec {
  std::string name;
  int nodes = 0;
  GraphFamily family = GraphFamily::kGrid;
  int steps_per_day = 288;
  int total_steps = 2016;
  double amplitude = 10.0;
  double trend_per_step = 0.0;
  int edge_delay_steps = 4;
  double noise_sigma = 0.3;
  uint64_t seed = 1;

  void validate() const;
};

struct GeneratedDomain {
  DomainSpec spec;
  TrafficGraph graph;
  Tensor series;  // (T, N, 3): flow, time-of-day, day-of-week
  // Spanning-tree edges whose planted lag equals edge_delay_steps exactly.
  std::vector<std::pair<int, int>> planted_tree;
};

GeneratedDomain generate_domain(const DomainSpec& spec);

// On-disk layout: <dir>/adjacency.csv, <dir>/series.csv, <dir>/meta.json.
// Numbers are decimal text with 9 significant digits; writes are
// deterministic so reruns are byte-identical.
void write_dataset(const GeneratedDomain& domain, const std::string& dir);

struct LoadedDataset {
  std::string name;
  TrafficGraph graph;
  Tensor series;  // (T, N, C_in)
  int steps_per_day = 0;
  uint64_t seed = 0;
  std::vector<std::pair<int, int>> planted_tree;
};

LoadedDataset load_dataset(const std::string& dir);

// Sliding windows: history [t-H, t), target [t, t+F), t = H, H+stride, ...
struct WindowSet {
  int history = 0, horizon = 0, stride = 0;
  std::vector<int> starts;  // first target index per window
  int count() const { return static_cast<int>(starts.size()); }
};

WindowSet make_windows(int total_steps, int history, int horizon, int stride);

}  // namespace damba
