// Times the OpenMP kernels against the serial reference implementation and
// verifies that both produce bit-identical results. Not part of the test
// suite; build and run by hand when touching tensor code.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gatecap/rng.hpp"
#include "gatecap/tensor.hpp"

namespace {

using Clock = std::chrono::steady_clock;

gatecap::Matrix random_matrix(std::size_t rows, std::size_t cols, gatecap::Rng& rng) {
  gatecap::Matrix m(rows, cols);
  for (auto& v : m.a) v = rng.uniform(-1.0, 1.0);
  return m;
}

gatecap::Vector random_vector(std::size_t n, gatecap::Rng& rng) {
  gatecap::Vector v;
  v.v.resize(n);
  for (auto& x : v.v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <typename F>
double time_ms(std::size_t reps, F&& fn) {
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(reps);
}

bool bit_equal(const gatecap::Vector& a, const gatecap::Vector& b) {
  if (a.v.size() != b.v.size()) return false;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    if (a.v[i] != b.v[i]) return false;
  }
  return true;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; timings compare identical serial code paths\n");
#endif

  gatecap::Rng rng(42);
  bool all_equal = true;

  const std::size_t sizes[][2] = {{512, 512}, {512, 4096}, {2048, 2048}, {4096, 512}};
  for (const auto& sz : sizes) {
    const std::size_t rows = sz[0], cols = sz[1];
    const gatecap::Matrix m = random_matrix(rows, cols, rng);
    const gatecap::Vector x = random_vector(cols, rng);
    const gatecap::Vector xt = random_vector(rows, rng);
    const std::size_t reps = rows * cols > 1u << 21 ? 20 : 100;

    const double par_mv = time_ms(reps, [&] { (void)gatecap::matvec(m, x); });
    const double ser_mv = time_ms(reps, [&] { (void)gatecap::serialref::matvec(m, x); });
    const double par_mvt = time_ms(reps, [&] { (void)gatecap::matvec_transposed(m, xt); });
    const double ser_mvt = time_ms(reps, [&] { (void)gatecap::serialref::matvec_transposed(m, xt); });

    const bool eq_mv = bit_equal(gatecap::matvec(m, x), gatecap::serialref::matvec(m, x));
    const bool eq_mvt =
        bit_equal(gatecap::matvec_transposed(m, xt), gatecap::serialref::matvec_transposed(m, xt));
    const bool eq_ss = gatecap::sum_squares(m) == gatecap::serialref::sum_squares(m);
    all_equal = all_equal && eq_mv && eq_mvt && eq_ss;

    std::printf("%4zu x %-5zu matvec %8.3f ms (serial %8.3f ms, x%.2f)   "
                "matvec_T %8.3f ms (serial %8.3f ms, x%.2f)   bit-identical: %s\n",
                rows, cols, par_mv, ser_mv, ser_mv / par_mv, par_mvt, ser_mvt, ser_mvt / par_mvt,
                eq_mv && eq_mvt && eq_ss ? "yes" : "NO");
  }

  if (!all_equal) {
    std::printf("FAIL: parallel and serial kernels disagree\n");
    return 1;
  }
  std::printf("all kernels bit-identical to the serial reference\n");
  return 0;
}
