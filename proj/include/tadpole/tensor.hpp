#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tadpole {

// Dense row-major array of doubles. Observations are [H, W]; windows of
// frames are stacked as [n, H, W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Throws std::invalid_argument naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Stacks equally-shaped frames into a [n, ...] tensor.
Tensor stack_frames(std::span<const Tensor> frames);

// Number of frames in a stacked window (leading dimension).
std::size_t frame_count(const Tensor& window);

// Copy of frame f of a stacked window, with the leading dimension removed.
Tensor frame_slice(const Tensor& window, std::size_t f);

}  // namespace tadpole
