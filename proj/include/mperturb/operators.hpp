#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <string>

#include "mperturb/geometry.hpp"

namespace mperturb::operators {

using geometry::DomainMask;
using geometry::GridSpec;

/// Coefficients of  A u = -d_i[a_ij d_j u + a_i u] + b_i d_i u + c0 u,
/// sampled at every interior node of the common box D.
struct CoefficientField {
  GridSpec grid;
  Eigen::VectorXd a11, a22, a12;  // diffusion (a21 == a12)
  Eigen::VectorXd a1, a2;         // divergence-form drift
  Eigen::VectorXd b1, b2;         // advection
  Eigen::VectorXd c0;             // potential

  static CoefficientField constant(const GridSpec& grid, double d11 = 1.0, double d22 = 1.0,
                                   double d12 = 0.0, double drift_a1 = 0.0, double drift_a2 = 0.0,
                                   double adv_b1 = 0.0, double adv_b2 = 0.0, double pot = 0.0);
  bool finite() const;
};

/// Minimum eigenvalue of the symmetrised diffusion tensor at every node
/// must reach alpha0.
bool check_ellipticity(const CoefficientField& coeffs, double alpha0);

struct Coercivity {
  double lambda_A = 0.0;  // ||c0^-||_inf + 1/(2 alpha0) * sum_i ||a_i + b_i||_inf
  double lambda0 = 0.0;   // lambda_A + alpha0/2
};

Coercivity coercivity_constants(const CoefficientField& coeffs, double alpha0);

/// Assembled operator on the active nodes of a mask. The matrix M realises
/// the bilinear form through  a(u, v) = h^2 * v^T M u, so with the lumped
/// mass h^2*I the L2 spectrum of the operator is the plain eigenvalue
/// problem for M.
struct EllipticOperator {
  DomainMask mask;
  CoefficientField coeffs;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  double alpha0 = 1.0;
  double lambda_A = 0.0;
  double lambda0 = 0.0;
  double peclet = 0.0;  // h * max|b| / (2 alpha0); centered differences want < 1
  bool peclet_ok = true;

  int size() const { return static_cast<int>(matrix.rows()); }
};

EllipticOperator assemble(const DomainMask& mask, const CoefficientField& coeffs, double alpha0);

Eigen::VectorXd apply(const EllipticOperator& op, const Eigen::VectorXd& u);
double form_value(const EllipticOperator& op, const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Squared discrete H1_0 norm: ||u||_L2^2 plus the squared forward-difference
/// gradient over all faces (zero extension outside the mask).
double h1_norm_sq(const DomainMask& mask, const Eigen::VectorXd& u);

/// Coordinate text export: one "row col value" line per entry.
void write_coordinate_format(std::ostream& out, const EllipticOperator& op);

namespace serial {
/// Reference assembly, plain loops; used by the tests and benchmarks.
Eigen::SparseMatrix<double, Eigen::RowMajor> assemble_matrix(const DomainMask& mask,
                                                             const CoefficientField& coeffs);
}  // namespace serial

}  // namespace mperturb::operators
