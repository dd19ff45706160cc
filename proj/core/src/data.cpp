#include "damba/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "damba/error.hpp"
#include "damba/rng.hpp"

namespace damba {

namespace fs = std::filesystem;
using nlohmann::json;

GraphFamily graph_family_from_string(const std::string& s) {
  if (s == "cycle") return GraphFamily::kCycle;
  if (s == "grid") return GraphFamily::kGrid;
  if (s == "geometric") return GraphFamily::kGeometric;
  throw ValidationError(msg("unknown graph family: ", s, " (want cycle|grid|geometric)"));
}

std::string to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::kCycle: return "cycle";
    case GraphFamily::kGrid: return "grid";
    case GraphFamily::kGeometric: return "geometric";
  }
  return "?";
}

void DomainSpec::validate() const {
  require(!name.empty(), "domain spec: name required");
  require(nodes >= 2, msg("domain spec ", name, ": need at least 2 nodes, got ", nodes));
  require(steps_per_day >= 2, msg("domain spec ", name, ": steps_per_day must be >= 2"));
  require(total_steps >= 2, msg("domain spec ", name, ": total_steps must be >= 2"));
  require(total_steps % steps_per_day == 0,
          msg("domain spec ", name, ": period must divide total steps"));
  require(noise_sigma >= 0.0, msg("domain spec ", name, ": noise sigma must be >= 0"));
  require(edge_delay_steps >= 0, msg("domain spec ", name, ": edge delay must be >= 0"));
  require(amplitude > 0.0, msg("domain spec ", name, ": amplitude must be > 0"));
}

namespace {

Tensor build_adjacency(const DomainSpec& spec, Rng& rng) {
  const int n = spec.nodes;
  Tensor adj({n, n});
  switch (spec.family) {
    case GraphFamily::kCycle:
      for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        adj.at(i, j) = 1.0;
        adj.at(j, i) = 1.0;
      }
      break;
    case GraphFamily::kGrid: {
      int cols = 1;
      while ((cols + 1) * (cols + 1) <= n) ++cols;
      for (int i = 0; i < n; ++i) {
        const int r = i / cols, c = i % cols;
        if (c + 1 < cols && i + 1 < n) {
          adj.at(i, i + 1) = 1.0;
          adj.at(i + 1, i) = 1.0;
        }
        if ((r + 1) * cols + c < n) {
          adj.at(i, (r + 1) * cols + c) = 1.0;
          adj.at((r + 1) * cols + c, i) = 1.0;
        }
      }
      // Nodes beyond the last full row chain to their predecessor already;
      // guarantee the first node of a ragged tail is connected.
      for (int i = 0; i < n; ++i) {
        bool any = false;
        for (int j = 0; j < n; ++j) any = any || adj.at(i, j) > 0.0;
        if (!any && i > 0) {
          adj.at(i, i - 1) = 1.0;
          adj.at(i - 1, i) = 1.0;
        }
      }
      break;
    }
    case GraphFamily::kGeometric: {
      std::vector<double> x(static_cast<size_t>(n)), y(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        x[static_cast<size_t>(i)] = rng.uniform();
        y[static_cast<size_t>(i)] = rng.uniform();
      }
      const double radius = 1.8 / std::sqrt(static_cast<double>(n));
      auto dist2 = [&](int i, int j) {
        const double dx = x[static_cast<size_t>(i)] - x[static_cast<size_t>(j)];
        const double dy = y[static_cast<size_t>(i)] - y[static_cast<size_t>(j)];
        return dx * dx + dy * dy;
      };
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          if (dist2(i, j) < radius * radius) {
            const double w = std::exp(-dist2(i, j) / (radius * radius));
            adj.at(i, j) = w;
            adj.at(j, i) = w;
          }
      break;
    }
  }

  // Connect any disconnected component to the BFS tree of node 0 so every
  // node is reachable and has positive degree.
  std::vector<int> seen(static_cast<size_t>(n), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (reached < n) {
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      for (int j = 0; j < n; ++j)
        if (adj.at(v, j) > 0.0 && !seen[static_cast<size_t>(j)]) {
          seen[static_cast<size_t>(j)] = 1;
          ++reached;
          q.push(j);
        }
    }
    if (reached == n) break;
    int orphan = -1;
    for (int v = 0; v < n && orphan < 0; ++v)
      if (!seen[static_cast<size_t>(v)]) orphan = v;
    int anchor = -1;
    for (int v = 0; v < n && anchor < 0; ++v)
      if (seen[static_cast<size_t>(v)]) anchor = v;
    adj.at(orphan, anchor) = 1.0;
    adj.at(anchor, orphan) = 1.0;
    seen[static_cast<size_t>(orphan)] = 1;
    ++reached;
    q.push(orphan);
  }
  return adj;
}

}  // namespace

GeneratedDomain generate_domain(const DomainSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Rng graph_rng = rng.fork(0x67726170);  // graph layout stream
  Rng noise_rng = rng.fork(0x6e6f6973);  // observation noise stream
  Rng shape_rng = rng.fork(0x73686170);  // signal shape stream

  GeneratedDomain out;
  out.spec = spec;
  out.graph = TrafficGraph::from_adjacency(build_adjacency(spec, graph_rng));

  const int n = spec.nodes;
  const int t_total = spec.total_steps;

  // Node delays accumulate along a BFS spanning tree, so every tree edge
  // carries exactly the planted lag.
  std::vector<int> depth_delay(static_cast<size_t>(n), -1);
  std::queue<int> q;
  q.push(0);
  depth_delay[0] = 0;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int j = 0; j < n; ++j)
      if (out.graph.adjacency.at(v, j) > 0.0 && depth_delay[static_cast<size_t>(j)] < 0) {
        depth_delay[static_cast<size_t>(j)] = depth_delay[static_cast<size_t>(v)] + spec.edge_delay_steps;
        out.planted_tree.emplace_back(v, j);
        q.push(j);
      }
  }

  // Base signal: daily cycle, weekly modulation, and a band-limited random
  // component that sharpens the cross-correlation peak.
  const double two_pi = 6.283185307179586476925286766559;
  const int n_rand = 5;
  std::vector<double> rf(n_rand), rp(n_rand), ra(n_rand);
  for (int i = 0; i < n_rand; ++i) {
    rf[static_cast<size_t>(i)] = shape_rng.uniform(2.0, 9.0) / spec.steps_per_day;
    rp[static_cast<size_t>(i)] = shape_rng.uniform(0.0, two_pi);
    ra[static_cast<size_t>(i)] = shape_rng.uniform(0.1, 0.3);
  }
  const double week_phase = shape_rng.uniform(0.0, two_pi);
  auto base_signal = [&](double step) {
    double v = std::sin(two_pi * step / spec.steps_per_day);
    v += 0.3 * std::sin(two_pi * step / (7.0 * spec.steps_per_day) + week_phase);
    for (int i = 0; i < n_rand; ++i)
      v += ra[static_cast<size_t>(i)] * std::sin(two_pi * rf[static_cast<size_t>(i)] * step +
                                                 rp[static_cast<size_t>(i)]);
    return v;
  };

  std::vector<double> node_amp(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) node_amp[static_cast<size_t>(v)] = 1.0 + 0.1 * shape_rng.uniform(-1.0, 1.0);

  out.series = Tensor({t_total, n, 3});
  for (int step = 0; step < t_total; ++step) {
    const double t_day = static_cast<double>(step % spec.steps_per_day) / spec.steps_per_day;
    const double t_week = static_cast<double>((step / spec.steps_per_day) % 7) / 7.0;
    for (int v = 0; v < n; ++v) {
      const double shifted = static_cast<double>(step - depth_delay[static_cast<size_t>(v)]);
      double value = spec.amplitude * node_amp[static_cast<size_t>(v)] * base_signal(shifted);
      value += spec.trend_per_step * step;
      value += spec.noise_sigma * noise_rng.normal();
      out.series.at(step, v, 0) = value;
      out.series.at(step, v, 1) = t_day;
      out.series.at(step, v, 2) = t_week;
    }
  }
  return out;
}

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_dataset(const GeneratedDomain& domain, const std::string& dir) {
  fs::create_directories(dir);
  const DomainSpec& spec = domain.spec;
  const int n = spec.nodes, t_total = spec.total_steps;

  {
    std::ofstream out(fs::path(dir) / "adjacency.csv");
    require(out.good(), msg("cannot write ", dir, "/adjacency.csv"));
    out << "src,dst,weight\n";
    for (const auto& e : domain.graph.edges) {
      out << e.src << "," << e.dst << "," << fmt9(e.weight) << "\n";
      out << e.dst << "," << e.src << "," << fmt9(e.weight) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "series.csv");
    require(out.good(), msg("cannot write ", dir, "/series.csv"));
    for (int v = 0; v < n; ++v) {
      if (v) out << ",";
      out << "n" << v << "_flow,n" << v << "_tod,n" << v << "_dow";
    }
    out << "\n";
    for (int step = 0; step < t_total; ++step) {
      for (int v = 0; v < n; ++v) {
        if (v) out << ",";
        out << fmt9(domain.series.at(step, v, 0)) << "," << fmt9(domain.series.at(step, v, 1))
            << "," << fmt9(domain.series.at(step, v, 2));
      }
      out << "\n";
    }
  }
  {
    json meta;
    meta["name"] = spec.name;
    meta["nodes"] = n;
    meta["total_steps"] = t_total;
    meta["in_channels"] = 3;
    meta["steps_per_day"] = spec.steps_per_day;
    meta["channels"] = {"flow", "tod", "dow"};
    meta["seed"] = spec.seed;
    meta["family"] = to_string(spec.family);
    meta["amplitude"] = spec.amplitude;
    meta["trend_per_step"] = spec.trend_per_step;
    meta["edge_delay_steps"] = spec.edge_delay_steps;
    meta["noise_sigma"] = spec.noise_sigma;
    json tree = json::array();
    for (const auto& [a, b] : domain.planted_tree) tree.push_back({a, b});
    meta["planted_tree"] = tree;
    std::ofstream out(fs::path(dir) / "meta.json");
    require(out.good(), msg("cannot write ", dir, "/meta.json"));
    out << meta.dump(2) << "\n";
  }
}

LoadedDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  require(fs::exists(root / "meta.json"), msg("dataset ", dir, ": meta.json missing"));
  require(fs::exists(root / "adjacency.csv"), msg("dataset ", dir, ": adjacency.csv missing"));
  require(fs::exists(root / "series.csv"), msg("dataset ", dir, ": series.csv missing"));

  json meta;
  {
    std::ifstream in(root / "meta.json");
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw ValidationError(msg("dataset ", dir, ": meta.json parse error: ", e.what()));
    }
  }
  LoadedDataset ds;
  try {
    ds.name = meta.at("name").get<std::string>();
    ds.steps_per_day = meta.at("steps_per_day").get<int>();
    ds.seed = meta.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(msg("dataset ", dir, ": meta.json missing field: ", e.what()));
  }
  const int n = meta.at("nodes").get<int>();
  const int t_total = meta.at("total_steps").get<int>();
  const int c_in = meta.at("in_channels").get<int>();
  require(n >= 2 && t_total >= 2 && c_in >= 1, msg("dataset ", dir, ": invalid meta dimensions"));
  if (meta.contains("planted_tree"))
    for (const auto& e : meta["planted_tree"])
      ds.planted_tree.emplace_back(e[0].get<int>(), e[1].get<int>());

  // Adjacency.
  {
    Tensor adj({n, n});
    std::ifstream in(root / "adjacency.csv");
    std::string line;
    std::getline(in, line);  // header
    int lineno = 1;
    std::vector<char> present(static_cast<size_t>(n) * n, 0);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      int a, b;
      double w;
      if (std::sscanf(line.c_str(), "%d,%d,%lf", &a, &b, &w) != 3)
        throw ValidationError(msg("dataset ", dir, ": adjacency.csv bad row at line ", lineno));
      require(a >= 0 && a < n && b >= 0 && b < n,
              msg("dataset ", dir, ": adjacency references invalid node at line ", lineno));
      require(!present[static_cast<size_t>(a) * n + b],
              msg("dataset ", dir, ": duplicate adjacency entry at line ", lineno));
      present[static_cast<size_t>(a) * n + b] = 1;
      adj.at(a, b) = w;
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (adj.at(i, j) != adj.at(j, i))
          throw ValidationError(
              msg("dataset ", dir, ": adjacency not symmetric at (", i, ",", j, ")"));
    ds.graph = TrafficGraph::from_adjacency(std::move(adj));
  }

  // Series.
  {
    ds.series = Tensor({t_total, n, c_in});
    std::ifstream in(root / "series.csv");
    std::string line;
    std::getline(in, line);  // header
    int row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      require(row < t_total,
              msg("dataset ", dir, ": series.csv has more than ", t_total, " rows"));
      std::stringstream ss(line);
      std::string cell;
      for (int v = 0; v < n; ++v)
        for (int c = 0; c < c_in; ++c) {
          require(static_cast<bool>(std::getline(ss, cell, ',')),
                  msg("dataset ", dir, ": series.csv short row ", row + 2));
          const double value = std::strtod(cell.c_str(), nullptr);
          require(std::isfinite(value),
                  msg("dataset ", dir, ": non-finite value in series.csv row ", row + 2));
          ds.series.at(row, v, c) = value;
        }
      ++row;
    }
    require(row == t_total,
            msg("dataset ", dir, ": series.csv row count ", row, ", expected ", t_total));
  }
  return ds;
}

WindowSet make_windows(int total_steps, int history, int horizon, int stride) {
  require(history >= 1 && horizon >= 1 && stride >= 1, "make_windows: H, F, stride must be >= 1");
  require(total_steps >= history + horizon,
          msg("make_windows: need T >= H+F, got T=", total_steps, " H=", history, " F=", horizon));
  WindowSet w;
  w.history = history;
  w.horizon = horizon;
  w.stride = stride;
  for (int t = history; t + horizon <= total_steps; t += stride) w.starts.push_back(t);
  return w;
}

}  // namespace damba
