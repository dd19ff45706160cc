#include "damba/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "damba/error.hpp"

namespace damba {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'M', 'B', 'A', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  require(in.good(), "checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string get_str(std::istream& in) {
  const uint32_t len = get_u32(in);
  require(len < (1u << 24), "checkpoint: unreasonable string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  require(in.good(), "checkpoint truncated");
  return s;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::map<std::string, std::string> config_meta(const ModelConfig& cfg) {
  std::map<std::string, std::string> m;
  m["cfg.token_dim"] = std::to_string(cfg.token_dim);
  m["cfg.state_dim"] = std::to_string(cfg.state_dim);
  m["cfg.lap_k"] = std::to_string(cfg.lap_k);
  m["cfg.patch_len"] = std::to_string(cfg.patch_len);
  m["cfg.patch_stride"] = std::to_string(cfg.patch_stride);
  m["cfg.history"] = std::to_string(cfg.history);
  m["cfg.horizon"] = std::to_string(cfg.horizon);
  m["cfg.in_channels"] = std::to_string(cfg.in_channels);
  m["cfg.max_lag"] = std::to_string(cfg.max_lag);
  m["cfg.delay_hidden"] = std::to_string(cfg.delay_hidden);
  m["cfg.w1"] = fmt_double(cfg.w1);
  m["cfg.w2"] = fmt_double(cfg.w2);
  return m;
}

ModelConfig config_from_meta(const std::map<std::string, std::string>& m,
                             std::vector<std::string> domains) {
  auto geti = [&](const std::string& key) {
    auto it = m.find(key);
    require(it != m.end(), msg("checkpoint: missing meta field ", key));
    return std::stoi(it->second);
  };
  auto getd = [&](const std::string& key) {
    auto it = m.find(key);
    require(it != m.end(), msg("checkpoint: missing meta field ", key));
    return std::stod(it->second);
  };
  ModelConfig cfg;
  cfg.token_dim = geti("cfg.token_dim");
  cfg.state_dim = geti("cfg.state_dim");
  cfg.lap_k = geti("cfg.lap_k");
  cfg.patch_len = geti("cfg.patch_len");
  cfg.patch_stride = geti("cfg.patch_stride");
  cfg.history = geti("cfg.history");
  cfg.horizon = geti("cfg.horizon");
  cfg.in_channels = geti("cfg.in_channels");
  cfg.max_lag = geti("cfg.max_lag");
  cfg.delay_hidden = geti("cfg.delay_hidden");
  cfg.w1 = getd("cfg.w1");
  cfg.w2 = getd("cfg.w2");
  cfg.domain_names = std::move(domains);
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const DambaModel& model, const Rng& rng,
                     const std::map<std::string, std::string>& extra_meta) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), msg("cannot write checkpoint: ", path));
  out.write(kMagic, 8);
  put_u32(out, kVersion);

  std::map<std::string, std::string> meta = config_meta(model.config());
  for (const auto& [k, v] : extra_meta) meta[k] = v;
  put_u32(out, static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(out, k);
    put_str(out, v);
  }

  const auto& domains = model.config().domain_names;
  put_u32(out, static_cast<uint32_t>(domains.size()));
  for (const auto& name : domains) put_str(out, name);

  uint64_t state[4];
  bool cached;
  double cache_val;
  rng.state(state, cached, cache_val);
  for (int i = 0; i < 4; ++i) put_u64(out, state[i]);
  put_u32(out, cached ? 1 : 0);
  put_f64(out, cache_val);

  const ParamStore& store = model.store();
  put_u64(out, store.count());
  for (const auto& p : store.items()) {
    put_str(out, p->name);
    put_u32(out, static_cast<uint32_t>(p->value.rank()));
    for (int i = 0; i < p->value.rank(); ++i) put_u32(out, static_cast<uint32_t>(p->value.dim(i)));
    for (long long i = 0; i < p->value.size(); ++i) put_f64(out, p->value[i]);
  }
  require(out.good(), msg("checkpoint write failed: ", path));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), msg("cannot open checkpoint: ", path));
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          msg("not a model checkpoint: ", path));
  const uint32_t version = get_u32(in);
  require(version == kVersion, msg("unsupported checkpoint version ", version));

  LoadedCheckpoint ck;
  const uint32_t n_meta = get_u32(in);
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_str(in);
    ck.meta[k] = get_str(in);
  }
  std::vector<std::string> domains;
  const uint32_t n_domains = get_u32(in);
  for (uint32_t i = 0; i < n_domains; ++i) domains.push_back(get_str(in));

  uint64_t state[4];
  for (int i = 0; i < 4; ++i) state[i] = get_u64(in);
  const bool cached = get_u32(in) != 0;
  const double cache_val = get_f64(in);
  ck.rng.set_state(state, cached, cache_val);

  ck.model = std::make_unique<DambaModel>(config_from_meta(ck.meta, std::move(domains)), 0);
  ParamStore& store = ck.model->store();

  const uint64_t n_params = get_u64(in);
  require(n_params == store.count(),
          msg("checkpoint parameter count ", n_params, " does not match model ", store.count()));
  for (uint64_t i = 0; i < n_params; ++i) {
    const std::string name = get_str(in);
    Param& p = store.at(name);
    const uint32_t rank = get_u32(in);
    require(rank == static_cast<uint32_t>(p.value.rank()),
            msg("checkpoint: rank mismatch for ", name));
    long long count = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t dim = get_u32(in);
      require(static_cast<int>(dim) == p.value.dim(static_cast<int>(r)),
              msg("checkpoint: shape mismatch for ", name));
      count *= dim;
    }
    for (long long j = 0; j < count; ++j) p.value[j] = get_f64(in);
  }
  return ck;
}

}  // namespace damba
