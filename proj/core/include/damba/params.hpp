#pragma once

#include <memory>
#include <string>
#include <vector>

#include "damba/tape.hpp"
#include "damba/tensor.hpp"

namespace damba {

// A named learnable tensor with its optimizer moments and the leaf Var it
// was bound to on the current tape pass.
struct Param {
  std::string name;
  Tensor value;
  Tensor m, v;  // Adam first/second moments, sized on first update
  Var bound;    // leaf on the current tape, refreshed by bind_all()
};

// Ordered registry of parameters. Registration order is deterministic and
// defines checkpoint layout and optimizer iteration order.
class ParamStore {
 public:
  Param& create(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  Param* find(const std::string& name);

  size_t count() const { return items_.size(); }
  long long total_size() const;
  const std::vector<std::unique_ptr<Param>>& items() const { return items_; }

  // Creates one leaf per parameter on the tape and records it in bound.
  void bind_all(Tape& tape);

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

}  // namespace damba
