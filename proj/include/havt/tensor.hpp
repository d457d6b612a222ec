#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "havt/errors.hpp"

namespace havt {

// Dense row-major float32 tensor used at the data boundary (files, generator,
// frontend). The model side converts to torch tensors.
class FloatTensor {
 public:
  FloatTensor() = default;
  explicit FloatTensor(std::vector<int64_t> shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  FloatTensor(std::vector<int64_t> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != count(shape_)) {
      throw ShapeError("FloatTensor: data size " + std::to_string(data_.size()) +
                       " does not match shape element count " +
                       std::to_string(count(shape_)));
    }
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  bool all_finite() const;

  friend bool operator==(const FloatTensor&, const FloatTensor&) = default;

  static int64_t count(const std::vector<int64_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                           std::multiplies<>());
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace havt
