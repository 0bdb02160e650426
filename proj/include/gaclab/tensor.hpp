#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace gaclab {

// Dense n-dimensional array of 64-bit floats, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);
  static Tensor ones(std::vector<int> shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major multi-index access; bounds are the caller's responsibility.
  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // Throws std::runtime_error if any entry is NaN/Inf; `what` names the tensor.
  void require_finite(const std::string& what) const;

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);
  static std::size_t numel(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Trainable tensor: value plus accumulated gradient of the same shape.
struct Param {
  Tensor value;
  Tensor grad;
  std::string name;

  Param() = default;
  Param(std::string n, Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape())), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace gaclab
