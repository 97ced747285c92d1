#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kbref {

// Dense row-major tensor of doubles. Shapes stay small (rank <= 4); all the
// heavy lifting happens through Graph ops, this is just storage plus a few
// accessors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);  // zero-filled
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-2 accessors.
  double& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  double at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);
  std::string shape_str() const;  // e.g. "[7, 7, 512]"

  // In-place reshape reusing capacity; contents are unspecified afterwards
  // and the caller must overwrite every element (or call fill).
  void reinit(const std::vector<int64_t>& shape);
  // In-place reshape + copy, reusing capacity.
  void assign_copy(const std::vector<int64_t>& shape, const double* src);

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

int64_t shape_product(const std::vector<int64_t>& shape);

}  // namespace kbref
