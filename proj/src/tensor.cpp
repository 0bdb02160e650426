#include "gaclab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gaclab {

std::size_t Tensor::numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

double& Tensor::at(std::initializer_list<int> idx) {
  std::size_t flat = 0;
  std::size_t i = 0;
  for (int v : idx) {
    flat = flat * static_cast<std::size_t>(shape_[i]) + static_cast<std::size_t>(v);
    ++i;
  }
  return data_[flat];
}

double Tensor::at(std::initializer_list<int> idx) const { return const_cast<Tensor*>(this)->at(idx); }

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) throw std::runtime_error(what + ": non-finite entries in tensor of shape " + shape_str());
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace gaclab
