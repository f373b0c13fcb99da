#include "mperturb/operators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

#include "mperturb/kernels.hpp"

namespace mperturb::operators {

CoefficientField CoefficientField::constant(const GridSpec& grid, double d11, double d22,
                                            double d12, double drift_a1, double drift_a2,
                                            double adv_b1, double adv_b2, double pot) {
  CoefficientField c;
  c.grid = grid;
  const int n = grid.nodes();
  c.a11 = Eigen::VectorXd::Constant(n, d11);
  c.a22 = Eigen::VectorXd::Constant(n, d22);
  c.a12 = Eigen::VectorXd::Constant(n, d12);
  c.a1 = Eigen::VectorXd::Constant(n, drift_a1);
  c.a2 = Eigen::VectorXd::Constant(n, drift_a2);
  c.b1 = Eigen::VectorXd::Constant(n, adv_b1);
  c.b2 = Eigen::VectorXd::Constant(n, adv_b2);
  c.c0 = Eigen::VectorXd::Constant(n, pot);
  return c;
}

bool CoefficientField::finite() const {
  for (const Eigen::VectorXd* f : {&a11, &a22, &a12, &a1, &a2, &b1, &b2, &c0}) {
    if (f->size() != grid.nodes()) return false;
    if (!f->allFinite()) return false;
  }
  return true;
}

bool check_ellipticity(const CoefficientField& coeffs, double alpha0) {
  if (!coeffs.finite()) return false;
  for (int p = 0; p < coeffs.grid.nodes(); ++p) {
    const double a = coeffs.a11[p], d = coeffs.a22[p], b = coeffs.a12[p];
    const double min_eig = 0.5 * (a + d - std::sqrt((a - d) * (a - d) + 4.0 * b * b));
    if (!(min_eig >= alpha0)) return false;
  }
  return true;
}

Coercivity coercivity_constants(const CoefficientField& coeffs, double alpha0) {
  if (!check_ellipticity(coeffs, alpha0))
    throw NumericalError("coercivity_constants: ellipticity check failed for alpha0");
  double c0_neg = 0.0;
  for (int p = 0; p < coeffs.grid.nodes(); ++p) c0_neg = std::max(c0_neg, -coeffs.c0[p]);
  const Eigen::VectorXd s1 = coeffs.a1 + coeffs.b1;
  const Eigen::VectorXd s2 = coeffs.a2 + coeffs.b2;
  const double drift = s1.cwiseAbs().maxCoeff() + s2.cwiseAbs().maxCoeff();
  Coercivity out;
  out.lambda_A = c0_neg + drift / (2.0 * alpha0);
  out.lambda0 = out.lambda_A + alpha0 / 2.0;
  return out;
}

namespace {

// Offsets in stencil order: C, E, W, N, S, NE, NW, SE, SW.
constexpr int kDi[9] = {0, 1, -1, 0, 0, 1, -1, 1, -1};
constexpr int kDj[9] = {0, 0, 0, 1, -1, 1, 1, -1, -1};

struct RowStencil {
  std::array<double, 9> w{};
};

inline double sample(const Eigen::VectorXd& f, const GridSpec& g, int i, int j) {
  return f[g.index(std::clamp(i, 1, g.m), std::clamp(j, 1, g.m))];
}

// Second-order centered stencil of the full operator at node (i, j).
// Diffusion diagonal in flux form with arithmetic face averages, cross and
// first-order terms by centered differences, c0 on the diagonal.
RowStencil stencil_row(const CoefficientField& c, int i, int j) {
  const GridSpec& g = c.grid;
  const double h = g.spacing();
  const double ih2 = 1.0 / (h * h);
  const double i2h = 1.0 / (2.0 * h);
  const double i4h2 = 1.0 / (4.0 * h * h);
  RowStencil s;

  const double aE = 0.5 * (sample(c.a11, g, i, j) + sample(c.a11, g, i + 1, j));
  const double aW = 0.5 * (sample(c.a11, g, i, j) + sample(c.a11, g, i - 1, j));
  const double aN = 0.5 * (sample(c.a22, g, i, j) + sample(c.a22, g, i, j + 1));
  const double aS = 0.5 * (sample(c.a22, g, i, j) + sample(c.a22, g, i, j - 1));
  s.w[0] += (aE + aW + aN + aS) * ih2;
  s.w[1] += -aE * ih2;
  s.w[2] += -aW * ih2;
  s.w[3] += -aN * ih2;
  s.w[4] += -aS * ih2;

  const double xE = sample(c.a12, g, i + 1, j), xW = sample(c.a12, g, i - 1, j);
  const double xN = sample(c.a12, g, i, j + 1), xS = sample(c.a12, g, i, j - 1);
  s.w[5] += -(xE + xN) * i4h2;  // NE
  s.w[6] += (xW + xN) * i4h2;   // NW
  s.w[7] += (xE + xS) * i4h2;   // SE
  s.w[8] += -(xW + xS) * i4h2;  // SW

  s.w[1] += -sample(c.a1, g, i + 1, j) * i2h;
  s.w[2] += sample(c.a1, g, i - 1, j) * i2h;
  s.w[3] += -sample(c.a2, g, i, j + 1) * i2h;
  s.w[4] += sample(c.a2, g, i, j - 1) * i2h;

  const double b1 = sample(c.b1, g, i, j), b2 = sample(c.b2, g, i, j);
  s.w[1] += b1 * i2h;
  s.w[2] += -b1 * i2h;
  s.w[3] += b2 * i2h;
  s.w[4] += -b2 * i2h;

  s.w[0] += sample(c.c0, g, i, j);
  return s;
}

inline void node_of(const GridSpec& g, int p, int& i, int& j) {
  i = p % g.m + 1;
  j = p / g.m + 1;
}

}  // namespace

EllipticOperator assemble(const DomainMask& mask, const CoefficientField& coeffs, double alpha0) {
  if (!(mask.grid() == coeffs.grid)) throw NumericalError("assemble: grid mismatch");
  if (!check_ellipticity(coeffs, alpha0))
    throw NumericalError("assemble: ellipticity check failed for alpha0 = " + std::to_string(alpha0));

  const int nact = mask.active_count();
  const GridSpec& g = mask.grid();

  struct Entry {
    int col;
    double val;
  };
  std::vector<Entry> slots(static_cast<std::size_t>(nact) * 9);
  std::vector<int> counts(static_cast<std::size_t>(nact), 0);

#pragma omp parallel for schedule(static)
  for (int r = 0; r < nact; ++r) {
    int i, j;
    node_of(g, mask.full_of_local(r), i, j);
    const RowStencil st = stencil_row(coeffs, i, j);
    int cnt = 0;
    for (int k = 0; k < 9; ++k) {
      const int ii = i + kDi[k], jj = j + kDj[k];
      if (ii < 1 || ii > g.m || jj < 1 || jj > g.m) continue;
      const int col = mask.local_of_full(g.index(ii, jj));
      if (col < 0) continue;
      if (st.w[static_cast<std::size_t>(k)] == 0.0 && k != 0) continue;
      slots[static_cast<std::size_t>(r) * 9 + static_cast<std::size_t>(cnt)] =
          Entry{col, st.w[static_cast<std::size_t>(k)]};
      ++cnt;
    }
    counts[static_cast<std::size_t>(r)] = cnt;
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nact) * 9);
  for (int r = 0; r < nact; ++r)
    for (int k = 0; k < counts[static_cast<std::size_t>(r)]; ++k) {
      const Entry& e = slots[static_cast<std::size_t>(r) * 9 + static_cast<std::size_t>(k)];
      trip.emplace_back(r, e.col, e.val);
    }

  EllipticOperator op{mask, coeffs, {}, alpha0, 0.0, 0.0, 0.0, true};
  op.matrix.resize(nact, nact);
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  const Coercivity co = coercivity_constants(coeffs, alpha0);
  op.lambda_A = co.lambda_A;
  op.lambda0 = co.lambda0;
  const double bmax = std::max(coeffs.b1.cwiseAbs().maxCoeff(), coeffs.b2.cwiseAbs().maxCoeff());
  op.peclet = g.spacing() * bmax / (2.0 * alpha0);
  op.peclet_ok = op.peclet < 1.0;
  return op;
}

Eigen::VectorXd apply(const EllipticOperator& op, const Eigen::VectorXd& u) {
  if (u.size() != op.size()) throw NumericalError("apply: dimension mismatch");
  Eigen::VectorXd y(u.size());
  kernels::spmv(op.matrix, {u.data(), static_cast<std::size_t>(u.size())},
                {y.data(), static_cast<std::size_t>(y.size())});
  return y;
}

double form_value(const EllipticOperator& op, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != op.size() || v.size() != op.size())
    throw NumericalError("form_value: dimension mismatch");
  return geometry::inner_l2(op.mask.grid(), apply(op, u), v);
}

double h1_norm_sq(const DomainMask& mask, const Eigen::VectorXd& u) {
  if (u.size() != mask.active_count()) throw NumericalError("h1_norm_sq: dimension mismatch");
  const GridSpec& g = mask.grid();
  auto value = [&](int i, int j) -> double {
    if (i < 1 || i > g.m || j < 1 || j > g.m) return 0.0;
    const int loc = mask.local_of_full(g.index(i, j));
    return loc < 0 ? 0.0 : u[loc];
  };
  double grad_sq = 0.0;
  for (int j = 1; j <= g.m; ++j)
    for (int i = 0; i <= g.m; ++i) {
      const double d = value(i + 1, j) - value(i, j);
      grad_sq += d * d;
    }
  for (int i = 1; i <= g.m; ++i)
    for (int j = 0; j <= g.m; ++j) {
      const double d = value(i, j + 1) - value(i, j);
      grad_sq += d * d;
    }
  const double l2 = g.cell_area() * u.squaredNorm();
  return l2 + grad_sq;
}

void write_coordinate_format(std::ostream& out, const EllipticOperator& op) {
  out << "# rows cols nnz\n";
  out << op.matrix.rows() << " " << op.matrix.cols() << " " << op.matrix.nonZeros() << "\n";
  char buf[64];
  for (int r = 0; r < op.matrix.outerSize(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(op.matrix, r); it; ++it) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", static_cast<int>(it.row()),
                    static_cast<int>(it.col()), it.value());
      out << buf;
    }
}

namespace serial {

Eigen::SparseMatrix<double, Eigen::RowMajor> assemble_matrix(const DomainMask& mask,
                                                             const CoefficientField& coeffs) {
  const GridSpec& g = mask.grid();
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < mask.active_count(); ++r) {
    int i, j;
    node_of(g, mask.full_of_local(r), i, j);
    const RowStencil st = stencil_row(coeffs, i, j);
    for (int k = 0; k < 9; ++k) {
      const int ii = i + kDi[k], jj = j + kDj[k];
      if (ii < 1 || ii > g.m || jj < 1 || jj > g.m) continue;
      const int col = mask.local_of_full(g.index(ii, jj));
      if (col < 0) continue;
      if (st.w[static_cast<std::size_t>(k)] == 0.0 && k != 0) continue;
      trip.emplace_back(r, col, st.w[static_cast<std::size_t>(k)]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> m(mask.active_count(), mask.active_count());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace serial

}  // namespace mperturb::operators
