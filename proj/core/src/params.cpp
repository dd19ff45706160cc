#include "damba/params.hpp"

#include "damba/error.hpp"

namespace damba {

Param& ParamStore::create(const std::string& name, Tensor init) {
  require(find(name) == nullptr, msg("duplicate parameter name: ", name));
  require(init.all_finite(), msg("non-finite initializer for parameter ", name));
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = std::move(init);
  items_.push_back(std::move(p));
  return *items_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

Param& ParamStore::at(const std::string& name) {
  Param* p = find(name);
  require(p != nullptr, msg("unknown parameter: ", name));
  return *p;
}

const Param& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

long long ParamStore::total_size() const {
  long long n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

void ParamStore::bind_all(Tape& tape) {
  for (auto& p : items_) p->bound = tape.leaf(p->value, true);
}

}  // namespace damba
