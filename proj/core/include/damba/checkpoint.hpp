#pragma once

#include <map>
#include <memory>
#include <string>

#include "damba/dassm.hpp"
#include "damba/rng.hpp"

namespace damba {

// Binary model container: versioned header, key/value metadata (including
// the model configuration and epoch counter), domain registry, RNG state,
// and a parameter table of name -> (shape, raw little-endian doubles).
void save_checkpoint(const std::string& path, const DambaModel& model, const Rng& rng,
                     const std::map<std::string, std::string>& extra_meta = {});

struct LoadedCheckpoint {
  std::unique_ptr<DambaModel> model;
  Rng rng{0};
  std::map<std::string, std::string> meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace damba
