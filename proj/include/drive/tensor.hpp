#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "drive/errors.hpp"

namespace drive::nn {

inline std::size_t shape_product(std::span<const int> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

std::string shape_string(std::span<const int> shape);

/// Dense row-major tensor. The first dimension is the batch wherever a batch
/// is involved.
template <typename T>
struct BasicTensor {
  std::vector<int> shape;
  std::vector<T> values;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> s, T fill = T{0})
      : shape(std::move(s)), values(shape_product(shape), fill) {}
  BasicTensor(std::vector<int> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_product(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_string(shape));
    }
  }

  std::size_t size() const { return values.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

template <typename T>
using TensorMap = std::map<std::string, BasicTensor<T>, std::less<>>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  return BasicTensor<To>(t.shape, std::vector<To>(t.values.begin(), t.values.end()));
}

}  // namespace drive::nn
