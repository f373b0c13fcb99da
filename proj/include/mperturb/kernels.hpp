#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <span>
#include <vector>

// Data-parallel primitives shared by all modules. Every kernel has a plain
// serial reference twin in kernels::serial used by the tests and benchmarks.
//
// Reductions use a fixed block decomposition (block size independent of the
// thread count) with the partial sums combined in block order, so results are
// bitwise reproducible no matter how many threads run.

namespace mperturb::kernels {

using SpMatRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;

void set_max_threads(int n);  // 0 restores the hardware default
int max_threads();

double dot(std::span<const double> x, std::span<const double> y);
double norm2_sq(std::span<const double> x);
double norm_inf(std::span<const double> x);

// y = a*x + b*y
void axpby(double a, std::span<const double> x, double b, std::span<double> y);

// y = A x, rows independent
void spmv(const SpMatRow& a, std::span<const double> x, std::span<double> y);

// max over `from` of the min over `to` of the Euclidean distance, times scale.
// Returns 0 for an empty `from`; requires nonempty `to`.
double maxmin_distance(const std::vector<Eigen::VectorXd>& from,
                       const std::vector<Eigen::VectorXd>& to, double scale);

namespace serial {

double dot(std::span<const double> x, std::span<const double> y);
double norm2_sq(std::span<const double> x);
double norm_inf(std::span<const double> x);
void axpby(double a, std::span<const double> x, double b, std::span<double> y);
void spmv(const SpMatRow& a, std::span<const double> x, std::span<double> y);
double maxmin_distance(const std::vector<Eigen::VectorXd>& from,
                       const std::vector<Eigen::VectorXd>& to, double scale);

}  // namespace serial

}  // namespace mperturb::kernels
