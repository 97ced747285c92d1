#include "kbref/params.hpp"

#include "kbref/errors.hpp"
#include "kbref/rng.hpp"

namespace kbref {

ParamTensor& ParamStore::create(const std::string& name, std::vector<int64_t> shape) {
  if (index_.count(name)) throw DataError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<ParamTensor>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(std::move(shape));
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return *params_.back();
}

ParamTensor& ParamStore::create_uniform(const std::string& name, std::vector<int64_t> shape,
                                        double radius, uint64_t seed) {
  ParamTensor& p = create(name, std::move(shape));
  Rng rng(Rng::derive(seed, name));
  for (int64_t i = 0; i < p.value.size(); ++i) {
    p.value[i] = rng.uniform(-radius, radius);
  }
  return p;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

ParamTensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

const ParamTensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return *params_[it->second];
}

std::vector<ParamTensor*> ParamStore::all() {
  std::vector<ParamTensor*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const ParamTensor*> ParamStore::all() const {
  std::vector<const ParamTensor*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

}  // namespace kbref
