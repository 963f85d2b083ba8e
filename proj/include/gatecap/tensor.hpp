#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace gatecap {

// Dense row-major matrix of doubles. All reductions over its elements run in
// ascending index order so results are bit-reproducible across runs and
// thread counts.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  std::size_t size() const { return rows * cols; }
  double* data() { return a.data(); }
  const double* data() const { return a.data(); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

struct Vector {
  std::vector<double> v;

  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : v(n, fill) {}
  Vector(std::initializer_list<double> xs) : v(xs) {}

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  std::size_t size() const { return v.size(); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  bool operator==(const Vector& o) const { return v == o.v; }
};

// m * v. Each output row sums in ascending column order.
Vector matvec(const Matrix& m, const Vector& v);

// m^T * v. Each output element sums in ascending row order.
Vector matvec_transposed(const Matrix& m, const Vector& v);

// acc += u * w^T
void add_outer(Matrix& acc, const Vector& u, const Vector& w);

Vector add(const Vector& a, const Vector& b);
Vector elemwise_mul(const Vector& a, const Vector& b);

// Outputs are clamped strictly inside (0, 1) even where exp saturates.
Vector sigmoid(const Vector& v);
Vector relu(const Vector& v);
Vector tanh_act(const Vector& v);

// Max-subtracted, so safe for logits of any magnitude. Entries are floored
// at the smallest positive double; the sum stays within 1e-9 of 1.
Vector softmax(const Vector& v);

Vector clip_elementwise(const Vector& v, double bound);

// Sum of squared elements: per-row partials in ascending column order, then
// partials combined in ascending row order.
double sum_squares(const Matrix& m);

// Plain single-threaded versions of the parallel kernels above, kept as the
// reference the tests and the kernel benchmark compare against.
namespace serialref {
Vector matvec(const Matrix& m, const Vector& v);
Vector matvec_transposed(const Matrix& m, const Vector& v);
void add_outer(Matrix& acc, const Vector& u, const Vector& w);
double sum_squares(const Matrix& m);
}  // namespace serialref

}  // namespace gatecap
