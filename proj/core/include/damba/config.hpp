#pragma once

#include <string>
#include <vector>

#include "damba/data.hpp"
#include "damba/dassm.hpp"
#include "damba/optimizer.hpp"

namespace damba {

// Flat key=value file. Lines are `key = value`; blank lines and lines
// starting with '#' are ignored. Parse failures report the line number.
struct KvFile {
  struct Entry {
    std::string key, value;
    int line = 0;
  };
  std::vector<Entry> entries;

  static KvFile parse_file(const std::string& path);
  static KvFile parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;
  const Entry* find(const std::string& key) const;
  std::string get(const std::string& key) const;                       // error if absent
  std::string get_or(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key, long long dflt) const;
  double get_double(const std::string& key, double dflt) const;

  std::string origin;
};

// Run configuration for train/eval. Key names carry units where relevant
// (e.g. patch_len_steps).
struct RunConfig {
  std::vector<std::string> domain_paths;
  int token_dim = 16;
  int state_dim = 8;
  int laplacian_k = 8;
  int patch_len_steps = 12;
  int patch_stride_steps = 12;
  int history_steps = 48;
  int horizon_steps = 48;
  int max_lag_steps = 24;
  int delay_hidden = 8;
  int epochs = 200;
  double alpha = 1.0;
  double beta = 0.5;
  double sigma = 1.0;
  double c0 = 0.0;  // 0 = automatic L*D
  double w1 = 0.4;
  double w2 = 0.6;
  double lr = 1e-3;
  uint64_t seed = 1;
  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);
  void validate(bool check_paths) const;

  ModelConfig model_config(std::vector<std::string> domain_names) const;
  ObjectiveConfig objective_config() const;
  AdamConfig adam_config() const;
};

// Dataset generation spec: `domains = a,b,...` plus per-domain keys
// `<name>.nodes`, `<name>.graph`, `<name>.steps_per_day`, `<name>.total_steps`,
// `<name>.amplitude`, `<name>.trend_per_step`, `<name>.edge_delay_steps`,
// `<name>.noise_sigma`, `<name>.seed`.
std::vector<DomainSpec> parse_dataspec(const std::string& path);

std::vector<std::string> split_csv(const std::string& s);

}  // namespace damba
