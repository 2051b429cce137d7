#include "mld/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mld/error.hpp"

namespace mld {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_product(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros_like(const Tensor& other) {
  return Tensor(other.shape_, 0.0);
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) {
    throw ShapeError("rows() on rank-" + std::to_string(shape_.size()) +
                     " tensor");
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) {
    throw ShapeError("cols() on rank-" + std::to_string(shape_.size()) +
                     " tensor");
  }
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError("non-finite values in " + what);
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}
}  // namespace

Tensor& Tensor::operator+=(const Tensor& other) {
  check_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  check_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin > end || end > t.rows()) {
    throw ShapeError("slice_rows out of range");
  }
  const std::size_t c = t.cols();
  std::vector<double> out(t.data() + begin * c, t.data() + end * c);
  return Tensor::matrix(end - begin, c, std::move(out));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  const std::size_t c = t.cols();
  const std::size_t n = t.rows();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw ShapeError("gather_rows index out of range");
    std::copy_n(t.data() + indices[i] * c, c, out.data() + i * c);
  }
  return out;
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end) {
  const std::size_t c = t.cols();
  if (begin > end || end > c) throw ShapeError("slice_cols out of range");
  const std::size_t n = t.rows();
  const std::size_t w = end - begin;
  Tensor out({n, w});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(t.data() + r * c + begin, w, out.data() + r * w);
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor({0, 0});
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Tensor out({n, total});
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = p.cols();
      std::copy_n(p.data() + r * c, c, out.data() + r * total + off);
      off += c;
    }
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor({0, 0});
  const std::size_t c = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column count mismatch");
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * c);
  for (const auto& p : parts) {
    out.insert(out.end(), p.storage().begin(), p.storage().end());
  }
  return Tensor::matrix(n, c, std::move(out));
}

std::vector<double> column_mean(const Tensor& t) {
  const std::size_t n = t.rows();
  const std::size_t c = t.cols();
  std::vector<double> mean(c, 0.0);
  if (n == 0) return mean;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) mean[j] += t.at(r, j);
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  return mean;
}

Tensor column_covariance(const Tensor& t) {
  const std::size_t n = t.rows();
  const std::size_t c = t.cols();
  if (n < 2) throw ShapeError("covariance needs at least two rows");
  const auto mean = column_mean(t);
  Tensor cov({c, c});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < c; ++i) {
      const double di = t.at(r, i) - mean[i];
      for (std::size_t j = i; j < c; ++j) {
        cov.at(i, j) += di * (t.at(r, j) - mean[j]);
      }
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i; j < c; ++j) {
      cov.at(i, j) /= denom;
      cov.at(j, i) = cov.at(i, j);
    }
  }
  return cov;
}

}  // namespace mld
