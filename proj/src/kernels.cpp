#include "mperturb/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mperturb::kernels {

namespace {

constexpr std::ptrdiff_t kBlock = 2048;

int g_max_threads = 0;

int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

void set_max_threads(int n) {
  g_max_threads = n > 0 ? n : 0;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int max_threads() { return g_max_threads > 0 ? g_max_threads : hardware_threads(); }

double dot(std::span<const double> x, std::span<const double> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
    const std::ptrdiff_t lo = b * kBlock;
    const std::ptrdiff_t hi = std::min(lo + kBlock, n);
    double s = 0.0;
    for (std::ptrdiff_t i = lo; i < hi; ++i) s += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    partial[static_cast<std::size_t>(b)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

double norm2_sq(std::span<const double> x) { return dot(x, x); }

double norm_inf(std::span<const double> x) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
    const std::ptrdiff_t lo = b * kBlock;
    const std::ptrdiff_t hi = std::min(lo + kBlock, n);
    double s = 0.0;
    for (std::ptrdiff_t i = lo; i < hi; ++i) s = std::max(s, std::abs(x[static_cast<std::size_t>(i)]));
    partial[static_cast<std::size_t>(b)] = s;
  }
  double total = 0.0;
  for (double s : partial) total = std::max(total, s);
  return total;
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    y[k] = a * x[k] + b * y[k];
  }
}

void spmv(const SpMatRow& a, std::span<const double> x, std::span<double> y) {
  const std::ptrdiff_t rows = a.rows();
  const int* outer = a.outerIndexPtr();
  const int* inner = a.innerIndexPtr();
  const double* vals = a.valuePtr();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = outer[r]; k < outer[r + 1]; ++k) s += vals[k] * x[static_cast<std::size_t>(inner[k])];
    y[static_cast<std::size_t>(r)] = s;
  }
}

double maxmin_distance(const std::vector<Eigen::VectorXd>& from,
                       const std::vector<Eigen::VectorXd>& to, double scale) {
  if (from.empty()) return 0.0;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(from.size());
  std::vector<double> minsq(static_cast<std::size_t>(n), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Eigen::VectorXd& u = from[static_cast<std::size_t>(i)];
    double best = std::numeric_limits<double>::infinity();
    for (const Eigen::VectorXd& v : to) best = std::min(best, (u - v).squaredNorm());
    minsq[static_cast<std::size_t>(i)] = best;
  }
  double worst = 0.0;
  for (double d : minsq) worst = std::max(worst, d);
  return scale * std::sqrt(worst);
}

namespace serial {

double dot(std::span<const double> x, std::span<const double> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t nblocks = (n + kBlock - 1) / kBlock;
  double total = 0.0;
  for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
    const std::ptrdiff_t lo = b * kBlock;
    const std::ptrdiff_t hi = std::min(lo + kBlock, n);
    double s = 0.0;
    for (std::ptrdiff_t i = lo; i < hi; ++i) s += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    total += s;
  }
  return total;
}

double norm2_sq(std::span<const double> x) { return dot(x, x); }

double norm_inf(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s = std::max(s, std::abs(v));
  return s;
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b * y[i];
}

void spmv(const SpMatRow& a, std::span<const double> x, std::span<double> y) {
  const std::ptrdiff_t rows = a.rows();
  const int* outer = a.outerIndexPtr();
  const int* inner = a.innerIndexPtr();
  const double* vals = a.valuePtr();
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = outer[r]; k < outer[r + 1]; ++k) s += vals[k] * x[static_cast<std::size_t>(inner[k])];
    y[static_cast<std::size_t>(r)] = s;
  }
}

double maxmin_distance(const std::vector<Eigen::VectorXd>& from,
                       const std::vector<Eigen::VectorXd>& to, double scale) {
  double worst = 0.0;
  for (const Eigen::VectorXd& u : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Eigen::VectorXd& v : to) best = std::min(best, (u - v).squaredNorm());
    worst = std::max(worst, best);
  }
  return from.empty() ? 0.0 : scale * std::sqrt(worst);
}

}  // namespace serial

}  // namespace mperturb::kernels
