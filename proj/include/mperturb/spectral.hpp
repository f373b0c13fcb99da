#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "mperturb/operators.hpp"

namespace mperturb::spectral {

using geometry::DomainMask;
using geometry::GridSpec;

/// One eigenvalue of -A with right/left eigenvectors. The right vector is
/// L2-normalized; the left vector carries the bi-orthogonal normalization
/// h^2 * left^T * right = 1 (bilinear pairing, no conjugation).
struct EigenPair {
  std::complex<double> value;
  Eigen::VectorXcd right;
  Eigen::VectorXcd left;
  double residual = 0.0;  // ||(-M - value) right||_2 / ||right||_2
};

struct SpectralSplit {
  std::vector<EigenPair> sigma_s, sigma_c, sigma_u;
  bool hyperbolic = false;
  double tau_c = 0.0;
  double gap = 0.0;  // min distance of computed eigenvalues to the imaginary axis
  int d = 0;         // dim X^u counting multiplicity
};

struct EigOptions {
  double tol = 1e-8;        // residual target for each pair
  int max_restarts = 8;
  int ncv = 0;              // Krylov size, 0 = automatic
  int dense_threshold = 1500;
  std::uint64_t seed = 12345;
};

double default_shift(const operators::EllipticOperator& op);
double default_tau_c(const operators::EllipticOperator& op);

/// k eigenvalues of -A with largest real part via shift-invert Arnoldi
/// (dense solver below opts.dense_threshold unknowns). The shift must lie
/// right of the spectrum; pass NaN to use default_shift. A singular
/// factorization perturbs the shift and retries (up to 5 times).
std::vector<EigenPair> rightmost_eigs(const operators::EllipticOperator& op, int k,
                                      double shift, const EigOptions& opts = {});

SpectralSplit classify(std::vector<EigenPair> eigs, double tau_c);

/// Adaptive spectrum analysis: grows k until the computed tail is separated
/// from the non-stable classes, then classifies with the default tolerance.
SpectralSplit analyze(const operators::EllipticOperator& op, const EigOptions& opts = {},
                      int k0 = 8);

/// Which manifold construction the splitting serves:
///   Stable:   X- = X^s,  X+ = X^cu
///   Unstable: X- = X^cs, X+ = X^u
enum class SplitKind { Stable, Unstable };
std::string to_string(SplitKind kind);

/// Spectral projection onto X+ in factored form P+ = basis * (h^2 dual^T .),
/// with basis L2-orthonormal and dual bi-orthogonal to it. P- acts as
/// identity minus P+. `reduced` is the d x d matrix of -A on X+ in basis
/// coordinates.
struct Projector {
  SplitKind kind = SplitKind::Unstable;
  int d = 0;
  GridSpec grid;
  Eigen::MatrixXd basis;
  Eigen::MatrixXd dual;
  Eigen::MatrixXd reduced;
  double norm_plus = 0.0;
  double norm_minus = 1.0;
  double idem_residual = 0.0;
  double commute_residual = 0.0;

  Eigen::VectorXd coords(const Eigen::VectorXd& u) const;
  Eigen::VectorXd embed(const Eigen::VectorXd& c) const;
  Eigen::VectorXd project_plus(const Eigen::VectorXd& u) const;
  Eigen::VectorXd project_minus(const Eigen::VectorXd& u) const;
};

/// Bi-orthogonal eigen-expansion of the spectral projection (equals the
/// resolvent contour integral for semisimple spectra). Requires a
/// hyperbolic split; rejects defective eigenvalues.
Projector build_projector(const operators::EllipticOperator& op, const SpectralSplit& split,
                          SplitKind kind, std::uint64_t seed = 99, double residual_tol = 1e-6);

struct SubspaceBasis {
  Eigen::MatrixXd vectors;     // active nodes x d
  double conditioning = 0.0;   // smallest singular value in the L2 geometry
};

SubspaceBasis plus_basis(const Projector& proj);

/// Push a basis of X+ on the limit domain to a member domain:
/// f_{j,n} = P_n^+ (f_j zero-extended and restricted). Errors out when the
/// conditioning falls below conditioning_min.
SubspaceBasis pushforward_basis(const SubspaceBasis& f, const DomainMask& from,
                                const DomainMask& to, const Projector& proj_n,
                                double conditioning_min = 1e-6);

/// Operator norm of (P_n^+ - P^+) acting on L2(D) through zero extension,
/// computed as the largest singular value of the rank <= 2d difference.
double projector_gap(const Projector& proj_n, const DomainMask& mask_n, const Projector& proj,
                     const DomainMask& mask);

bool is_symmetric(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, double rel_tol = 1e-12);

}  // namespace mperturb::spectral
