#include "damba/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "damba/error.hpp"

namespace damba {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

KvFile KvFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), msg("cannot open config file: ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
  KvFile kv;
  kv.origin = origin;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError(msg(origin, ":", lineno, ": expected key = value"));
    Entry e;
    e.key = trim(t.substr(0, eq));
    e.value = trim(t.substr(eq + 1));
    e.line = lineno;
    if (e.key.empty())
      throw ValidationError(msg(origin, ":", lineno, ": empty key"));
    for (const Entry& prev : kv.entries)
      if (prev.key == e.key)
        throw ValidationError(msg(origin, ":", lineno, ": duplicate key ", e.key));
    kv.entries.push_back(std::move(e));
  }
  return kv;
}

bool KvFile::has(const std::string& key) const { return find(key) != nullptr; }

const KvFile::Entry* KvFile::find(const std::string& key) const {
  for (const Entry& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

std::string KvFile::get(const std::string& key) const {
  const Entry* e = find(key);
  require(e != nullptr, msg(origin, ": missing required key ", key));
  return e->value;
}

std::string KvFile::get_or(const std::string& key, const std::string& dflt) const {
  const Entry* e = find(key);
  return e ? e->value : dflt;
}

long long KvFile::get_int(const std::string& key, long long dflt) const {
  const Entry* e = find(key);
  if (!e) return dflt;
  try {
    size_t pos = 0;
    const long long v = std::stoll(e->value, &pos);
    require(pos == e->value.size(), "");
    return v;
  } catch (...) {
    throw ValidationError(msg(origin, ":", e->line, ": key ", key, " wants an integer, got '",
                              e->value, "'"));
  }
}

double KvFile::get_double(const std::string& key, double dflt) const {
  const Entry* e = find(key);
  if (!e) return dflt;
  try {
    size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    require(pos == e->value.size(), "");
    return v;
  } catch (...) {
    throw ValidationError(msg(origin, ":", e->line, ": key ", key, " wants a number, got '",
                              e->value, "'"));
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  const KvFile kv = KvFile::parse_file(path);
  RunConfig rc;
  rc.domain_paths = split_csv(kv.get("domain_paths"));
  rc.token_dim = static_cast<int>(kv.get_int("token_dim", rc.token_dim));
  rc.state_dim = static_cast<int>(kv.get_int("state_dim", rc.state_dim));
  rc.laplacian_k = static_cast<int>(kv.get_int("laplacian_k", rc.laplacian_k));
  rc.patch_len_steps = static_cast<int>(kv.get_int("patch_len_steps", rc.patch_len_steps));
  rc.patch_stride_steps =
      static_cast<int>(kv.get_int("patch_stride_steps", rc.patch_stride_steps));
  rc.history_steps = static_cast<int>(kv.get_int("history_steps", rc.history_steps));
  rc.horizon_steps = static_cast<int>(kv.get_int("horizon_steps", rc.horizon_steps));
  rc.max_lag_steps = static_cast<int>(kv.get_int("max_lag_steps", rc.max_lag_steps));
  rc.delay_hidden = static_cast<int>(kv.get_int("delay_hidden", rc.delay_hidden));
  rc.epochs = static_cast<int>(kv.get_int("epochs", rc.epochs));
  rc.alpha = kv.get_double("alpha", rc.alpha);
  rc.beta = kv.get_double("beta", rc.beta);
  rc.sigma = kv.get_double("sigma", rc.sigma);
  rc.c0 = kv.get_double("c0", rc.c0);
  rc.w1 = kv.get_double("w1", rc.w1);
  rc.w2 = kv.get_double("w2", rc.w2);
  rc.lr = kv.get_double("lr", rc.lr);
  rc.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<long long>(rc.seed)));
  rc.out_dir = kv.get_or("out_dir", rc.out_dir);
  return rc;
}

void RunConfig::validate(bool check_paths) const {
  require(!domain_paths.empty(), "config: domain_paths must list at least one dataset");
  require(epochs >= 0, "config: epochs must be >= 0");
  require(lr > 0.0, "config: lr must be > 0");
  require(alpha >= 0.0 && beta >= 0.0, "config: alpha/beta must be >= 0");
  require(sigma > 0.0, "config: sigma must be > 0");
  require(w1 > 0.0 && w2 > 0.0, "config: w1/w2 must be > 0");
  require(patch_len_steps >= patch_stride_steps && patch_stride_steps >= 1,
          "config: need patch_len_steps >= patch_stride_steps >= 1");
  require(history_steps >= patch_len_steps, "config: history_steps must cover a patch");
  require(horizon_steps >= 1, "config: horizon_steps must be >= 1");
  require(max_lag_steps >= 0, "config: max_lag_steps must be >= 0");
  if (check_paths)
    for (const std::string& p : domain_paths)
      require(std::filesystem::exists(p), msg("config: dataset path does not exist: ", p));
}

ModelConfig RunConfig::model_config(std::vector<std::string> domain_names) const {
  ModelConfig mc;
  mc.token_dim = token_dim;
  mc.state_dim = state_dim;
  mc.lap_k = laplacian_k;
  mc.patch_len = patch_len_steps;
  mc.patch_stride = patch_stride_steps;
  mc.history = history_steps;
  mc.horizon = horizon_steps;
  mc.max_lag = max_lag_steps;
  mc.delay_hidden = delay_hidden;
  mc.w1 = w1;
  mc.w2 = w2;
  mc.domain_names = std::move(domain_names);
  return mc;
}

ObjectiveConfig RunConfig::objective_config() const {
  ObjectiveConfig oc;
  oc.alpha = alpha;
  oc.beta = beta;
  oc.sigma = sigma;
  oc.c0 = c0;
  oc.w1 = w1;
  oc.w2 = w2;
  return oc;
}

AdamConfig RunConfig::adam_config() const {
  AdamConfig ac;
  ac.lr = lr;
  return ac;
}

std::vector<DomainSpec> parse_dataspec(const std::string& path) {
  const KvFile kv = KvFile::parse_file(path);
  const std::vector<std::string> names = split_csv(kv.get("domains"));
  require(!names.empty(), msg(path, ": domains list is empty"));
  std::vector<DomainSpec> specs;
  for (const std::string& name : names) {
    DomainSpec s;
    s.name = name;
    s.nodes = static_cast<int>(kv.get_int(name + ".nodes", 0));
    s.family = graph_family_from_string(kv.get_or(name + ".graph", "grid"));
    s.steps_per_day = static_cast<int>(kv.get_int(name + ".steps_per_day", 288));
    s.total_steps = static_cast<int>(kv.get_int(name + ".total_steps", 2016));
    s.amplitude = kv.get_double(name + ".amplitude", 10.0);
    s.trend_per_step = kv.get_double(name + ".trend_per_step", 0.0);
    s.edge_delay_steps = static_cast<int>(kv.get_int(name + ".edge_delay_steps", 4));
    s.noise_sigma = kv.get_double(name + ".noise_sigma", 0.3);
    s.seed = static_cast<uint64_t>(kv.get_int(name + ".seed", 1));
    s.validate();
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace damba
