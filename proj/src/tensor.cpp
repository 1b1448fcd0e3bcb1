#include "tadpole/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tadpole {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw std::invalid_argument("tensor: " + std::to_string(values_.size()) +
                                " values do not fill shape " +
                                shape_string(shape_));
  }
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

Tensor stack_frames(std::span<const Tensor> frames) {
  if (frames.empty()) throw std::invalid_argument("stack_frames: no frames");
  std::vector<std::size_t> shape{frames.size()};
  shape.insert(shape.end(), frames[0].shape().begin(), frames[0].shape().end());
  std::vector<double> values;
  values.reserve(frames.size() * frames[0].size());
  for (const auto& f : frames) {
    require_same_shape(f, frames[0], "stack_frames");
    values.insert(values.end(), f.values().begin(), f.values().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

std::size_t frame_count(const Tensor& window) {
  return window.shape().empty() ? 0 : window.shape()[0];
}

Tensor frame_slice(const Tensor& window, std::size_t f) {
  const std::size_t n = frame_count(window);
  if (f >= n) throw std::out_of_range("frame_slice: frame index out of range");
  std::vector<std::size_t> shape(window.shape().begin() + 1,
                                 window.shape().end());
  const std::size_t per = window.size() / n;
  auto first = window.values().begin() + static_cast<std::ptrdiff_t>(f * per);
  return Tensor(std::move(shape), std::vector<double>(first, first + per));
}

}  // namespace tadpole
