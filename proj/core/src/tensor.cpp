#include "damba/tensor.hpp"

#include <cmath>

#include "damba/error.hpp"

namespace damba {

void Tensor::init_shape(const int* dims, int rank) {
  require(rank >= 0 && rank <= 4, msg("tensor rank must be in [0,4], got ", rank));
  rank_ = rank;
  long long n = 1;
  for (int i = 0; i < rank; ++i) {
    require(dims[i] >= 0, "negative tensor extent");
    dims_[static_cast<size_t>(i)] = dims[i];
    n *= dims[i];
  }
  for (int i = rank; i < 4; ++i) dims_[static_cast<size_t>(i)] = 1;
  data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor::Tensor(std::initializer_list<int> shape) {
  init_shape(shape.begin(), static_cast<int>(shape.size()));
}

Tensor::Tensor(const std::vector<int>& shape) {
  init_shape(shape.data(), static_cast<int>(shape.size()));
}

Tensor::Tensor(std::initializer_list<int> shape, std::vector<double> data) {
  init_shape(shape.begin(), static_cast<int>(shape.size()));
  require(static_cast<long long>(data.size()) == size(),
          msg("tensor data length ", data.size(), " does not match shape product ", size()));
  data_ = std::move(data);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.rank_ = 0;
  t.data_.assign(1, v);
  return t;
}

Tensor Tensor::full(std::initializer_list<int> shape, double v) {
  Tensor t(shape);
  t.fill(v);
  return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
  Tensor t;
  t.rank_ = 1;
  t.dims_[0] = static_cast<int>(v.size());
  t.data_ = std::move(v);
  return t;
}

std::vector<int> Tensor::shape() const {
  return std::vector<int>(dims_.begin(), dims_.begin() + rank_);
}

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (int i = 0; i < rank_; ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[static_cast<size_t>(i)]);
  }
  return s + ")";
}

bool Tensor::same_shape(const Tensor& o) const {
  if (rank_ != o.rank_) return false;
  for (int i = 0; i < rank_; ++i)
    if (dims_[static_cast<size_t>(i)] != o.dims_[static_cast<size_t>(i)]) return false;
  return true;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::resize_like(const Tensor& o) {
  dims_ = o.dims_;
  rank_ = o.rank_;
  data_.resize(o.data_.size());
}

Tensor Tensor::reshaped(const std::vector<int>& shape) const {
  Tensor t(shape);
  require(t.size() == size(),
          msg("reshape from ", shape_str(), " to incompatible size ", t.size()));
  t.data_ = data_;
  return t;
}

}  // namespace damba
