#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace hovefl {

// Dense vector of doubles. Reductions run sequentially in index order so
// results do not depend on threading or platform vectorization choices.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const noexcept { return data_; }

  static Matrix Identity(std::size_t n);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
inline double dot(const Vector& a, const Vector& b) {
  return dot(a.span(), b.span());
}

double squared_norm(const Vector& v);
double norm(const Vector& v);

// y <- y + a * x
void axpy(double a, const Vector& x, Vector& y);
Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);

Vector matvec(const Matrix& m, const Vector& v);
bool all_finite(std::span<const double> values);
inline bool all_finite(const Vector& v) { return all_finite(v.span()); }
double max_abs_diff(const Vector& a, const Vector& b);

// Solves A x = b for symmetric positive definite A by Cholesky
// factorization. Throws kSingularSystem when A is not numerically SPD.
Vector cholesky_solve(const Matrix& a, const Vector& b);

// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
std::vector<double> symmetric_eigenvalues(const Matrix& a);

using ScalarFunction = std::function<double(const Vector&)>;

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
Vector finite_diff_gradient(const ScalarFunction& f, const Vector& x,
                            double h = 1e-5);

}  // namespace hovefl
