#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ggd {

// Dimension list of a Tensor. Rank is limited to 2 (scalars, vectors and
// row-major matrices), which covers every quantity the model needs.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 2;

  Shape() = default;  // rank 0: a scalar
  Shape(std::initializer_list<std::size_t> dims);

  static Shape scalar() { return {}; }
  static Shape vector(std::size_t n) { return {n}; }
  static Shape matrix(std::size_t r, std::size_t c) { return {r, c}; }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;

  bool operator==(const Shape& o) const;
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const;

 private:
  std::size_t rank_ = 0;
  std::array<std::size_t, kMaxRank> dims_{};
};

// Dense double-precision array in row-major order. numel(shape) == size().
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor one_hot(std::size_t n, std::size_t index);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.rank() == 0; }
  // Rows and columns when viewed as a matrix (vectors are one column).
  std::size_t rows() const { return shape_.rank() == 0 ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.rank() == 2 ? shape_[1] : 1; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const { return data_.at(0); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }
  const std::vector<double>& values() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace ggd
