#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace damba {

// Dense real array of rank <= 4, contiguous row-major doubles.
// The universal value type of the engine.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::initializer_list<int> shape);
  explicit Tensor(const std::vector<int>& shape);
  Tensor(std::initializer_list<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::initializer_list<int> shape) { return Tensor(shape); }
  static Tensor full(std::initializer_list<int> shape, double v);
  static Tensor from_vector(std::vector<double> v);  // rank-1

  int rank() const { return rank_; }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  std::vector<int> shape() const;
  std::string shape_str() const;
  long long size() const { return static_cast<long long>(data_.size()); }
  bool empty() const { return data_.empty() && rank_ == 0; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](long long i) { return data_[static_cast<size_t>(i)]; }
  double operator[](long long i) const { return data_[static_cast<size_t>(i)]; }

  // Row-major offsets for the common low ranks.
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
  double& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }
  double at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
  }

  bool same_shape(const Tensor& o) const;
  bool all_finite() const;
  double max_abs() const;

  void fill(double v);
  void resize_like(const Tensor& o);  // match shape, contents unspecified
  Tensor reshaped(const std::vector<int>& shape) const;

 private:
  void init_shape(const int* dims, int rank);

  std::array<int, 4> dims_{1, 1, 1, 1};
  int rank_ = 0;
  std::vector<double> data_;
};

}  // namespace damba
