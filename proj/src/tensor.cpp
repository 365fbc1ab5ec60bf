#include "cg2a/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "cg2a/errors.hpp"

namespace cg2a {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw StructuralError("tensor shape " + shape_string(shape_) + " does not match " +
                          std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor<T>(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::check_finite(const char* what) const {
  for (const T& v : data_) {
    if (!std::isfinite(v)) throw NumericInputError(std::string(what) + " has a non-finite entry");
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cg2a
