#include "gatecap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

#include "gatecap/error.hpp"

namespace gatecap {

namespace {

// Below this many multiply-adds the OpenMP region costs more than it saves.
constexpr std::int64_t kParallelThreshold = 16384;

[[noreturn]] void shape_fail(const char* op, std::size_t mr, std::size_t mc, std::size_t vl) {
  std::ostringstream os;
  os << op << ": matrix is " << mr << "x" << mc << ", vector has length " << vl;
  throw ConfigError(os.str());
}

[[noreturn]] void length_fail(const char* op, std::size_t la, std::size_t lb) {
  std::ostringstream os;
  os << op << ": vector lengths differ (" << la << " vs " << lb << ")";
  throw ConfigError(os.str());
}

}  // namespace

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols != v.size()) shape_fail("matvec", m.rows, m.cols, v.size());
  Vector out(m.rows);
  const double* md = m.data();
  const double* vd = v.data();
  const std::int64_t rows = static_cast<std::int64_t>(m.rows);
  const std::int64_t cols = static_cast<std::int64_t>(m.cols);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = md + i * cols;
    double acc = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) acc += row[j] * vd[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
  if (m.rows != v.size()) shape_fail("matvec_transposed", m.rows, m.cols, v.size());
  Vector out(m.cols);
  const double* md = m.data();
  const double* vd = v.data();
  const std::int64_t rows = static_cast<std::int64_t>(m.rows);
  const std::int64_t cols = static_cast<std::int64_t>(m.cols);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::int64_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) acc += md[i * cols + j] * vd[i];
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

void add_outer(Matrix& acc, const Vector& u, const Vector& w) {
  if (acc.rows != u.size() || acc.cols != w.size()) {
    std::ostringstream os;
    os << "add_outer: accumulator is " << acc.rows << "x" << acc.cols << ", vectors have lengths "
       << u.size() << " and " << w.size();
    throw ConfigError(os.str());
  }
  double* ad = acc.data();
  const double* ud = u.data();
  const double* wd = w.data();
  const std::int64_t rows = static_cast<std::int64_t>(acc.rows);
  const std::int64_t cols = static_cast<std::int64_t>(acc.cols);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* row = ad + i * cols;
    const double ui = ud[i];
    for (std::int64_t j = 0; j < cols; ++j) row[j] += ui * wd[j];
  }
}

Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) length_fail("add", a.size(), b.size());
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector elemwise_mul(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) length_fail("elemwise_mul", a.size(), b.size());
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vector sigmoid(const Vector& v) {
  Vector out(v.size());
  const double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    double r;
    if (x >= 0.0) {
      r = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      r = e / (1.0 + e);
    }
    out[i] = std::min(hi, std::max(lo, r));
  }
  return out;
}

Vector relu(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return out;
}

Vector tanh_act(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

Vector softmax(const Vector& v) {
  if (v.size() == 0) throw ConfigError("softmax: empty vector");
  double mx = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) mx = std::max(mx, v[i]);
  Vector out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  const double floor = std::numeric_limits<double>::denorm_min();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::max(floor, out[i] / z);
  }
  return out;
}

Vector clip_elementwise(const Vector& v, double bound) {
  if (!(bound > 0.0)) throw ConfigError("clip_elementwise: bound must be positive");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::min(bound, std::max(-bound, v[i]));
  return out;
}

double sum_squares(const Matrix& m) {
  const std::int64_t rows = static_cast<std::int64_t>(m.rows);
  const std::int64_t cols = static_cast<std::int64_t>(m.cols);
  if (rows == 0 || cols == 0) return 0.0;
  std::vector<double> part(static_cast<std::size_t>(rows), 0.0);
  const double* md = m.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelThreshold)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* row = md + i * cols;
    double acc = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) acc += row[j] * row[j];
    part[static_cast<std::size_t>(i)] = acc;
  }
  double total = 0.0;
  for (std::int64_t i = 0; i < rows; ++i) total += part[static_cast<std::size_t>(i)];
  return total;
}

namespace serialref {

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols != v.size()) shape_fail("serialref::matvec", m.rows, m.cols, v.size());
  Vector out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) acc += m(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
  if (m.rows != v.size()) shape_fail("serialref::matvec_transposed", m.rows, m.cols, v.size());
  Vector out(m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) acc += m(i, j) * v[i];
    out[j] = acc;
  }
  return out;
}

void add_outer(Matrix& acc, const Vector& u, const Vector& w) {
  if (acc.rows != u.size() || acc.cols != w.size()) {
    throw ConfigError("serialref::add_outer: shape mismatch");
  }
  for (std::size_t i = 0; i < acc.rows; ++i) {
    for (std::size_t j = 0; j < acc.cols; ++j) acc(i, j) += u[i] * w[j];
  }
}

double sum_squares(const Matrix& m) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) acc += m(i, j) * m(i, j);
    total += acc;
  }
  return total;
}

}  // namespace serialref

}  // namespace gatecap
