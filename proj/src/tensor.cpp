#include "cnnsplit/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

std::size_t element_count(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + dims_to_string(dims));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string dims_to_string(const std::vector<int>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> dims, float fill) : dims_(std::move(dims)) {
  data_.assign(element_count(dims_), fill);
}

Tensor::Tensor(std::vector<int> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (element_count(dims_) != data_.size()) {
    throw ShapeError("tensor dims " + dims_to_string(dims_) + " do not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::reshaped(std::vector<int> dims) const {
  return Tensor(std::move(dims), data_);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace cnnsplit
