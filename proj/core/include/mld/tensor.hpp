#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mld {

// Dense row-major array of doubles. Most code uses rank 1 (vectors) and
// rank 2 ([rows, cols], one sample per row).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 helpers. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN or Inf.
  void require_finite(const std::string& what) const;

  // Elementwise in-place arithmetic; shapes must agree.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Rows [begin, end) of a rank-2 tensor.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
// Rows selected by index, in the given order.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);
// Columns [begin, end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end);
// Horizontal concatenation of rank-2 tensors with equal row counts.
Tensor concat_cols(std::span<const Tensor> parts);
// Vertical concatenation of rank-2 tensors with equal column counts.
Tensor concat_rows(std::span<const Tensor> parts);

std::vector<double> column_mean(const Tensor& t);
// Unbiased (n-1) sample covariance of the rows of t.
Tensor column_covariance(const Tensor& t);

}  // namespace mld
