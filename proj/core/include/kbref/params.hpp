#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbref/tensor.hpp"

namespace kbref {

// One learnable tensor. Gradients accumulate across Graph::backward calls
// until zero_grad().
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named registry of learnable tensors; creation order is stable and defines
// the iteration order everywhere (updates, checkpoints, gradient checks).
class ParamStore {
 public:
  ParamTensor& create(const std::string& name, std::vector<int64_t> shape);
  // Seeded uniform(-radius, radius); the stream is derived from (seed, name)
  // so adding a tensor does not disturb the draws of the others.
  ParamTensor& create_uniform(const std::string& name, std::vector<int64_t> shape, double radius,
                              uint64_t seed);

  bool has(const std::string& name) const;
  ParamTensor& get(const std::string& name);
  const ParamTensor& get(const std::string& name) const;

  std::vector<ParamTensor*> all();
  std::vector<const ParamTensor*> all() const;
  size_t count() const { return params_.size(); }
  int64_t total_size() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<ParamTensor>> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace kbref
