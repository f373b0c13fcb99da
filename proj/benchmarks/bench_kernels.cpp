#include <benchmark/benchmark.h>

#include "mperturb/kernels.hpp"
#include "mperturb/operators.hpp"
#include "mperturb/rng.hpp"

// Parallel kernels against their serial reference twins. Run with
// --benchmark_filter=... to pick one; OMP_NUM_THREADS controls the pool.

namespace {

using namespace mperturb;

std::span<const double> sp(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Fixture {
  geometry::GridSpec grid = geometry::make_grid(127);
  geometry::DomainMask mask = geometry::full_mask(grid);
  operators::CoefficientField coeffs =
      operators::CoefficientField::constant(grid, 2.0, 1.5, 0.3, 0.2, 0.1, 0.4, -0.2, -7.0);
  operators::EllipticOperator op = operators::assemble(mask, coeffs, 0.5);
  Eigen::VectorXd x, y;
  std::vector<Eigen::VectorXd> cloud_a, cloud_b;

  Fixture() {
    Rng rng(5);
    x = rng.normal_vector(op.size());
    y = rng.normal_vector(op.size());
    for (int i = 0; i < 48; ++i) cloud_a.push_back(rng.normal_vector(grid.nodes()));
    for (int i = 0; i < 48; ++i) cloud_b.push_back(rng.normal_vector(grid.nodes()));
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_spmv_parallel(benchmark::State& state) {
  Fixture& f = fixture();
  Eigen::VectorXd out(f.op.size());
  for (auto _ : state) {
    kernels::spmv(f.op.matrix, sp(f.x), {out.data(), static_cast<std::size_t>(out.size())});
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_spmv_serial(benchmark::State& state) {
  Fixture& f = fixture();
  Eigen::VectorXd out(f.op.size());
  for (auto _ : state) {
    kernels::serial::spmv(f.op.matrix, sp(f.x), {out.data(), static_cast<std::size_t>(out.size())});
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_dot_parallel(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::dot(sp(f.x), sp(f.y)));
}

void BM_dot_serial(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::dot(sp(f.x), sp(f.y)));
}

void BM_axpby_parallel(benchmark::State& state) {
  Fixture& f = fixture();
  Eigen::VectorXd out = f.y;
  for (auto _ : state) {
    kernels::axpby(0.7, sp(f.x), 0.4, {out.data(), static_cast<std::size_t>(out.size())});
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_axpby_serial(benchmark::State& state) {
  Fixture& f = fixture();
  Eigen::VectorXd out = f.y;
  for (auto _ : state) {
    kernels::serial::axpby(0.7, sp(f.x), 0.4, {out.data(), static_cast<std::size_t>(out.size())});
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_maxmin_parallel(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::maxmin_distance(f.cloud_a, f.cloud_b, 0.01));
}

void BM_maxmin_serial(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::serial::maxmin_distance(f.cloud_a, f.cloud_b, 0.01));
}

void BM_assemble_parallel(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) {
    auto op = operators::assemble(f.mask, f.coeffs, 0.5);
    benchmark::DoNotOptimize(op.matrix.valuePtr());
  }
}

void BM_assemble_serial(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) {
    auto m = operators::serial::assemble_matrix(f.mask, f.coeffs);
    benchmark::DoNotOptimize(m.valuePtr());
  }
}

BENCHMARK(BM_spmv_parallel);
BENCHMARK(BM_spmv_serial);
BENCHMARK(BM_dot_parallel);
BENCHMARK(BM_dot_serial);
BENCHMARK(BM_axpby_parallel);
BENCHMARK(BM_axpby_serial);
BENCHMARK(BM_maxmin_parallel);
BENCHMARK(BM_maxmin_serial);
BENCHMARK(BM_assemble_parallel);
BENCHMARK(BM_assemble_serial);

}  // namespace

BENCHMARK_MAIN();
