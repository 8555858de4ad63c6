#include "lclab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "lclab/errors.hpp"

namespace lclab {

const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kBadMagic: return "bad magic";
    case ParseErrorKind::kVersionMismatch: return "version mismatch";
    case ParseErrorKind::kTruncated: return "truncated file";
    case ParseErrorKind::kBounds: return "tensor out of bounds";
    case ParseErrorKind::kHeader: return "malformed header";
    case ParseErrorKind::kShape: return "shape mismatch";
    case ParseErrorKind::kNonFinite: return "non-finite tensor data";
  }
  return "parse error";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " + std::to_string(shape_numel(shape_)));
  }
}

Tensor Tensor::from_external(Shape shape, std::vector<float> data) {
  Tensor t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw InputError("tensor contains NaN or Inf");
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a rank-2 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a rank-2 tensor");
  return shape_[1];
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

}  // namespace lclab
