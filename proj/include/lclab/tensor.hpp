#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lclab {

using Shape = std::vector<std::size_t>;

// Dense row-major float32 array with an explicit shape. No broadcasting:
// every kernel checks shapes exactly.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  // Same as the data constructor but also rejects NaN/Inf. Use for anything
  // that did not originate inside the library.
  static Tensor from_external(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;
  float& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const Shape& shape);

// Shape equality plus memcmp of the payload (distinguishes -0.0f from 0.0f).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace lclab
