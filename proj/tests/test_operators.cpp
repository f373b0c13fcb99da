#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mperturb/operators.hpp"
#include "mperturb/rng.hpp"
#include "mperturb/spectral.hpp"

using namespace mperturb;
using namespace mperturb::operators;
using geometry::full_mask;
using geometry::GridSpec;
using geometry::make_grid;

namespace {

// 2x2 symmetric eigenvalue oracle
double min_eig_2x2(double a, double d, double b) {
  return 0.5 * (a + d - std::sqrt((a - d) * (a - d) + 4.0 * b * b));
}

}  // namespace

TEST_CASE("ellipticity check against the 2x2 eigenvalue oracle") {
  const GridSpec grid = make_grid(5);
  CHECK(check_ellipticity(CoefficientField::constant(grid, 1, 1, 0), 1.0));
  CHECK_FALSE(check_ellipticity(CoefficientField::constant(grid, 1, -1, 0), 0.5));

  const double oracle = min_eig_2x2(2.0, 1.0, 0.5);
  CHECK(oracle == doctest::Approx(0.79289321881345254).epsilon(1e-15));
  CHECK(check_ellipticity(CoefficientField::constant(grid, 2, 1, 0.5), 0.7));
  CHECK_FALSE(check_ellipticity(CoefficientField::constant(grid, 2, 1, 0.5), 0.8));
}

TEST_CASE("coercivity constants") {
  const GridSpec grid = make_grid(5);
  {
    const Coercivity c = coercivity_constants(CoefficientField::constant(grid), 1.0);
    CHECK(c.lambda_A == 0.0);
    CHECK(c.lambda0 == 0.5);
  }
  {
    const Coercivity c = coercivity_constants(
        CoefficientField::constant(grid, 1, 1, 0, 0, 0, 0, 0, -30.0), 1.0);
    CHECK(c.lambda_A == 30.0);
    CHECK(c.lambda0 == 30.5);
  }
  {
    const Coercivity c = coercivity_constants(
        CoefficientField::constant(grid, 1, 1, 0, 1.0, 0, 1.0, 0, 0), 1.0);
    CHECK(c.lambda_A == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("interior 3x3 mask assembles the classic 5-point stencil") {
  const GridSpec grid = make_grid(5);
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(grid.nodes()), 0);
  for (int j = 2; j <= 4; ++j)
    for (int i = 2; i <= 4; ++i) flags[static_cast<std::size_t>(grid.index(i, j))] = 1;
  const geometry::DomainMask mask(grid, flags, "core");
  const EllipticOperator op = assemble(mask, CoefficientField::constant(grid), 1.0);

  const double ih2 = 1.0 / grid.cell_area();
  const int c = mask.local_of_full(grid.index(3, 3));
  CHECK(op.matrix.coeff(c, c) == 4.0 * ih2);
  CHECK(op.matrix.coeff(c, mask.local_of_full(grid.index(4, 3))) == -ih2);
  CHECK(op.matrix.coeff(c, mask.local_of_full(grid.index(2, 3))) == -ih2);
  CHECK(op.matrix.coeff(c, mask.local_of_full(grid.index(3, 4))) == -ih2);
  CHECK(op.matrix.coeff(c, mask.local_of_full(grid.index(3, 2))) == -ih2);
}

TEST_CASE("constant potential shifts the matrix by gamma * identity exactly") {
  const GridSpec grid = make_grid(9);
  const geometry::DomainMask mask = full_mask(grid);
  const double gamma = -12.5;
  const EllipticOperator base = assemble(mask, CoefficientField::constant(grid), 1.0);
  const EllipticOperator shifted =
      assemble(mask, CoefficientField::constant(grid, 1, 1, 0, 0, 0, 0, 0, gamma), 1.0);
  Eigen::SparseMatrix<double, Eigen::RowMajor> id(mask.active_count(), mask.active_count());
  id.setIdentity();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> diff = shifted.matrix - base.matrix - gamma * id;
  CHECK(Eigen::MatrixXd(diff).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discrete sine mode is an exact eigenvector of the assembled Laplacian") {
  // analytic rectangle eigenvalues as the oracle, discrete flavor
  const GridSpec grid = make_grid(63);
  const geometry::DomainMask mask = full_mask(grid);
  const EllipticOperator op = assemble(mask, CoefficientField::constant(grid), 1.0);

  const double h = grid.spacing();
  Eigen::VectorXd u(mask.active_count());
  for (int k = 0; k < mask.active_count(); ++k) {
    const int p = mask.full_of_local(k);
    const int i = p % grid.m + 1, j = p / grid.m + 1;
    u[k] = std::sin(M_PI * i * h) * std::sin(M_PI * j * h);
  }
  const double s = std::sin(M_PI * h / 2.0);
  const double lambda_disc = 8.0 * s * s / (h * h);
  const Eigen::VectorXd r = apply(op, u) - lambda_disc * u;
  CHECK(r.cwiseAbs().maxCoeff() < 1e-9 * lambda_disc);
  CHECK(lambda_disc == doctest::Approx(2.0 * M_PI * M_PI).epsilon(0.01));
}

TEST_CASE("apply and form value basics") {
  const GridSpec grid = make_grid(15);
  const geometry::DomainMask mask = full_mask(grid);
  const EllipticOperator op =
      assemble(mask, CoefficientField::constant(grid, 1, 1, 0, 0.3, 0.1, 0.5, -0.2, -4.0), 1.0);

  CHECK(apply(op, Eigen::VectorXd::Zero(op.size())).norm() == 0.0);
  CHECK_THROWS_AS((void)apply(op, Eigen::VectorXd::Zero(3)), NumericalError);

  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd u = rng.normal_vector(op.size());
    const double q = form_value(op, u, u) +
                     op.lambda0 * std::pow(geometry::norm_l2(grid, u), 2);
    CHECK(q >= 0.0);
  }

  // linearity of the matrix action
  const Eigen::VectorXd a = rng.normal_vector(op.size()), b = rng.normal_vector(op.size());
  CHECK((apply(op, a + b) - apply(op, a) - apply(op, b)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Garding inequality with the discrete H1 norm on random vectors") {
  const GridSpec grid = make_grid(31);
  const geometry::DomainMask mask = full_mask(grid);
  CoefficientField coeffs = CoefficientField::constant(grid, 2, 1.5, 0.3, 0.4, 0, 0.6, 0, -30.0);
  const EllipticOperator op = assemble(mask, coeffs, 1.0);
  Rng rng(17);
  double min_slack = 1e300;
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd u = rng.normal_vector(op.size());
    const double lhs = form_value(op, u, u) + op.lambda0 * std::pow(geometry::norm_l2(grid, u), 2);
    min_slack = std::min(min_slack, lhs - 0.5 * op.alpha0 * h1_norm_sq(mask, u));
  }
  CHECK(min_slack >= 0.0);
}

TEST_CASE("pure diffusion with symmetric coefficients assembles symmetrically") {
  const GridSpec grid = make_grid(21);
  CoefficientField coeffs = CoefficientField::constant(grid, 1, 1, 0.25);
  for (int j = 1; j <= grid.m; ++j)
    for (int i = 1; i <= grid.m; ++i) {
      const int p = grid.index(i, j);
      coeffs.a11[p] += 0.5 * std::sin(2 * M_PI * grid.x(i));
      coeffs.a22[p] += 0.3 * std::cos(M_PI * grid.y(j));
      coeffs.a12[p] = 0.2 * std::sin(M_PI * grid.x(i)) * std::sin(M_PI * grid.y(j));
    }
  const EllipticOperator op = assemble(full_mask(grid), coeffs, 0.3);
  CHECK(spectral::is_symmetric(op.matrix, 1e-14));
}

namespace {

struct Manufactured {
  // u = sin(pi x) sin(2 pi y) against analytic coefficients
  static double u(double x, double y) { return std::sin(M_PI * x) * std::sin(2 * M_PI * y); }
  static double ux(double x, double y) { return M_PI * std::cos(M_PI * x) * std::sin(2 * M_PI * y); }
  static double uy(double x, double y) { return 2 * M_PI * std::sin(M_PI * x) * std::cos(2 * M_PI * y); }
  static double uxx(double x, double y) { return -M_PI * M_PI * u(x, y); }
  static double uyy(double x, double y) { return -4 * M_PI * M_PI * u(x, y); }
  static double uxy(double x, double y) {
    return 2 * M_PI * M_PI * std::cos(M_PI * x) * std::cos(2 * M_PI * y);
  }

  static double a11(double x, double) { return 1.0 + 0.3 * x; }
  static double a22(double, double y) { return 1.0 + 0.2 * y; }
  static constexpr double a12 = 0.1;
  static constexpr double aa1 = 0.2, aa2 = 0.1;  // divergence drift (constant)
  static constexpr double b1 = 0.3, b2 = -0.2;
  static double c0(double x, double) { return 1.0 + x; }

  static double Au(double x, double y) {
    const double diff = -(0.3 * ux(x, y) + a11(x, y) * uxx(x, y)) -
                        (0.2 * uy(x, y) + a22(x, y) * uyy(x, y)) - 2.0 * a12 * uxy(x, y);
    const double drift = -(aa1 * ux(x, y) + aa2 * uy(x, y));
    const double adv = b1 * ux(x, y) + b2 * uy(x, y);
    return diff + drift + adv + c0(x, y) * u(x, y);
  }
};

double truncation_error(int m) {
  const GridSpec grid = make_grid(m);
  const geometry::DomainMask mask = full_mask(grid);
  CoefficientField coeffs = CoefficientField::constant(grid);
  for (int j = 1; j <= grid.m; ++j)
    for (int i = 1; i <= grid.m; ++i) {
      const int p = grid.index(i, j);
      const double x = grid.x(i), y = grid.y(j);
      coeffs.a11[p] = Manufactured::a11(x, y);
      coeffs.a22[p] = Manufactured::a22(x, y);
      coeffs.a12[p] = Manufactured::a12;
      coeffs.a1[p] = Manufactured::aa1;
      coeffs.a2[p] = Manufactured::aa2;
      coeffs.b1[p] = Manufactured::b1;
      coeffs.b2[p] = Manufactured::b2;
      coeffs.c0[p] = Manufactured::c0(x, y);
    }
  Eigen::VectorXd u(mask.active_count());
  for (int k = 0; k < mask.active_count(); ++k) {
    const int p = mask.full_of_local(k);
    u[k] = Manufactured::u(grid.x(p % grid.m + 1), grid.y(p / grid.m + 1));
  }
  const Eigen::VectorXd mu = apply(assemble(mask, coeffs, 0.5), u);
  double worst = 0.0;
  for (int k = 0; k < mask.active_count(); ++k) {
    const int p = mask.full_of_local(k);
    const int i = p % grid.m + 1, j = p / grid.m + 1;
    if (i < 3 || i > grid.m - 2 || j < 3 || j > grid.m - 2) continue;  // clamped-face boundary ring
    worst = std::max(worst, std::abs(mu[k] - Manufactured::Au(grid.x(i), grid.y(j))));
  }
  return worst;
}

}  // namespace

TEST_CASE("stencil truncation error converges at second order") {
  const double e15 = truncation_error(15);
  const double e31 = truncation_error(31);
  const double e63 = truncation_error(63);
  CHECK(e15 / e31 > 2.5);
  CHECK(e15 / e31 < 6.0);
  CHECK(e31 / e63 > 2.5);
  CHECK(e31 / e63 < 6.0);
}

TEST_CASE("coefficient convergence drives matrix convergence") {
  const GridSpec grid = make_grid(21);
  const geometry::DomainMask mask = full_mask(grid);
  const CoefficientField base = CoefficientField::constant(grid, 1.5, 1.2, 0.1);
  const Eigen::MatrixXd m_limit = Eigen::MatrixXd(assemble(mask, base, 0.5).matrix);

  double prev = 1e300;
  for (int n : {1, 2, 4, 8}) {
    CoefficientField cn = base;
    for (int j = 1; j <= grid.m; ++j)
      for (int i = 1; i <= grid.m; ++i)
        cn.a11[grid.index(i, j)] += 0.4 * std::sin(2 * M_PI * grid.x(i)) / n;
    const double gap =
        (Eigen::MatrixXd(assemble(mask, cn, 0.5).matrix) - m_limit).cwiseAbs().maxCoeff();
    CHECK(gap < prev);
    prev = gap;
  }
}

TEST_CASE("Peclet guard flags strong advection") {
  const GridSpec grid = make_grid(15);
  const EllipticOperator ok =
      assemble(full_mask(grid), CoefficientField::constant(grid, 1, 1, 0, 0, 0, 2.0, 0, 0), 1.0);
  CHECK(ok.peclet_ok);
  const EllipticOperator bad =
      assemble(full_mask(grid), CoefficientField::constant(grid, 1, 1, 0, 0, 0, 64.0, 0, 0), 1.0);
  CHECK_FALSE(bad.peclet_ok);
  CHECK(bad.peclet > 1.0);
}

TEST_CASE("parallel assembly matches the serial reference bitwise") {
  const GridSpec grid = make_grid(31);
  const geometry::DomainFamily fam = geometry::build_family(geometry::FamilyKind::Dumbbell, 2, grid);
  CoefficientField coeffs = CoefficientField::constant(grid, 2, 1.5, 0.3, 0.4, -0.1, 0.6, 0.2, -7.0);
  for (int p = 0; p < grid.nodes(); ++p) coeffs.a11[p] += 0.2 * std::sin(p * 0.01);

  const EllipticOperator op = assemble(fam.members[1], coeffs, 0.5);
  const auto ref = serial::assemble_matrix(fam.members[1], coeffs);
  REQUIRE(op.matrix.nonZeros() == ref.nonZeros());
  CHECK(Eigen::Map<const Eigen::VectorXd>(op.matrix.valuePtr(), op.matrix.nonZeros()) ==
        Eigen::Map<const Eigen::VectorXd>(ref.valuePtr(), ref.nonZeros()));
}

TEST_CASE("coordinate export emits one line per entry") {
  const GridSpec grid = make_grid(5);
  const EllipticOperator op = assemble(full_mask(grid), CoefficientField::constant(grid), 1.0);
  std::ostringstream out;
  write_coordinate_format(out, op);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  int rows, cols;
  long nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == op.size());
  CHECK(nnz == op.matrix.nonZeros());
  int r, c;
  double v;
  long count = 0;
  while (in >> r >> c >> v) ++count;
  CHECK(count == nnz);
}
