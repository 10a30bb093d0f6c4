#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cnnsplit {

/// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, float fill = 0.0f);
  Tensor(std::vector<int> dims, std::vector<float> data);

  const std::vector<int>& dims() const noexcept { return dims_; }
  int dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors.
  float& at(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + h) * dims_[2] + w];
  }
  float at(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + h) * dims_[2] + w];
  }

  /// Same data, new dims; element count must match.
  Tensor reshaped(std::vector<int> dims) const;

  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> dims_;
  std::vector<float> data_;
};

std::size_t element_count(const std::vector<int>& dims);
std::string dims_to_string(const std::vector<int>& dims);

}  // namespace cnnsplit
