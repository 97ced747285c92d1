#include "kbref/tensor.hpp"

#include <cmath>
#include <sstream>

#include "kbref/errors.hpp"

namespace kbref {

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in tensor shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("tensor data length does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::reinit(const std::vector<int64_t>& shape) {
  shape_ = shape;
  data_.resize(static_cast<size_t>(shape_product(shape_)));
}

void Tensor::assign_copy(const std::vector<int64_t>& shape, const double* src) {
  shape_ = shape;
  data_.assign(src, src + shape_product(shape_));
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

}  // namespace kbref
