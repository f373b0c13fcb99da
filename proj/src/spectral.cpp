#include "mperturb/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mperturb/rng.hpp"
#include "mperturb/smallmat.hpp"

namespace mperturb::spectral {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using SpMatC = Eigen::SparseMatrix<std::complex<double>>;

double gershgorin_right_bound(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
  // upper bound for Re(lambda(-M))
  double bound = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < m.outerSize(); ++r) {
    double center = 0.0, radius = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
      if (it.col() == r)
        center = -it.value();
      else
        radius += std::abs(it.value());
    }
    bound = std::max(bound, center + radius);
  }
  return bound;
}

double gershgorin_radius(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
  double bound = 0.0;
  for (int r = 0; r < m.outerSize(); ++r) {
    double sum = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it)
      sum += std::abs(it.value());
    bound = std::max(bound, sum);
  }
  return bound;
}

SpMat neg_shifted(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, double shift) {
  SpMat k = (-m).eval();  // column-major copy of -M
  SpMat id(m.rows(), m.cols());
  id.setIdentity();
  k -= shift * id;
  return k;
}

Eigen::VectorXcd apply_neg(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                           const Eigen::VectorXcd& x) {
  Eigen::VectorXcd y(x.size());
  y.real() = -(m * x.real().eval()).eval();
  y.imag() = -(m * x.imag().eval()).eval();
  return y;
}

double pair_residual(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                     std::complex<double> theta, const Eigen::VectorXcd& x) {
  const Eigen::VectorXcd r = apply_neg(m, x) - theta * x;
  return r.norm() / x.norm();
}

struct RawPair {
  std::complex<double> value;
  Eigen::VectorXcd right;
  double residual = 0.0;
};

// One shot of shift-invert refinement at the pair's own eigenvalue; also
// used to generate left eigenvectors from the transposed matrix.
void polish_pair(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, bool transpose,
                 RawPair& p, int iterations) {
  const int n = static_cast<int>(m.rows());
  const std::complex<double> delta(std::max(std::abs(p.value), 1.0) * 1e-7, 0.0);
  SpMatC k(n, n);
  {
    std::vector<Eigen::Triplet<std::complex<double>>> trip;
    trip.reserve(static_cast<std::size_t>(m.nonZeros()) + static_cast<std::size_t>(n));
    for (int r = 0; r < m.outerSize(); ++r)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
        const int rr = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
        const int cc = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
        trip.emplace_back(rr, cc, std::complex<double>(-it.value(), 0.0));
      }
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, -(p.value + delta));
    k.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SparseLU<SpMatC> lu;
  lu.compute(k);
  if (lu.info() != Eigen::Success) return;
  Eigen::VectorXcd x = p.right;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXcd y = lu.solve(x);
    if (!y.allFinite() || y.norm() == 0.0) break;
    x = y / y.norm();
  }
  if (!transpose) {
    const std::complex<double> rq = x.dot(apply_neg(m, x)) / x.dot(x);
    const double res = pair_residual(m, rq, x);
    if (res < p.residual || p.residual == 0.0) {
      p.value = rq;
      p.right = x;
      p.residual = res;
    }
  } else {
    p.right = x;
  }
}

std::vector<RawPair> dense_rightmost(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                                     int k) {
  const Eigen::MatrixXd md = -Eigen::MatrixXd(m);
  Eigen::EigenSolver<Eigen::MatrixXd> es(md);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  std::vector<int> order(static_cast<std::size_t>(md.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto va = es.eigenvalues()[a], vb = es.eigenvalues()[b];
    if (va.real() != vb.real()) return va.real() > vb.real();
    return va.imag() > vb.imag();
  });
  std::vector<RawPair> out;
  for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i) {
    RawPair p;
    p.value = es.eigenvalues()[order[static_cast<std::size_t>(i)]];
    p.right = es.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    p.residual = pair_residual(m, p.value, p.right);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<RawPair> arnoldi_rightmost(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m,
                                       int k, double shift, const EigOptions& opts) {
  const int n = static_cast<int>(m.rows());

  Eigen::SparseLU<SpMat> lu;
  double s = shift;
  bool factored = false;
  for (int attempt = 0; attempt < 5 && !factored; ++attempt) {
    lu.compute(neg_shifted(m, s));
    if (lu.info() == Eigen::Success)
      factored = true;
    else
      s = s * (1.0 + 1e-3) + 0.1;
  }
  if (!factored) throw NumericalError("shift-invert factorization failed after 5 shift retries");

  Rng rng(opts.seed);
  Eigen::VectorXd v0 = rng.normal_vector(n).normalized();
  double best_worst_res = std::numeric_limits<double>::infinity();

  // Interior transformed eigenvalues cluster, so restarts grow the Krylov
  // space; the tight residuals come from the per-pair polish afterwards.
  int ncv = std::min(n, opts.ncv > 0 ? opts.ncv : std::max(4 * k + 30, 62));
  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    Eigen::MatrixXd v(n, ncv + 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(ncv + 1, ncv);
    v.col(0) = v0;
    int built = ncv;
    for (int j = 0; j < ncv; ++j) {
      Eigen::VectorXd w = lu.solve(v.col(j));
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) {
          const double c = v.col(i).dot(w);
          w -= c * v.col(i);
          h(i, j) += c;
        }
      const double beta = w.norm();
      h(j + 1, j) = beta;
      if (beta < 1e-300) {
        built = j + 1;
        break;
      }
      v.col(j + 1) = w / beta;
    }

    const Eigen::MatrixXd hs = h.topLeftCorner(built, built);
    Eigen::EigenSolver<Eigen::MatrixXd> es(hs);
    if (es.info() != Eigen::Success) throw NumericalError("Hessenberg eigensolver failed");
    const double beta = built < ncv ? 0.0 : h(built, built - 1);

    std::vector<int> order(static_cast<std::size_t>(built));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const std::complex<double> ta = s + 1.0 / es.eigenvalues()[a];
      const std::complex<double> tb = s + 1.0 / es.eigenvalues()[b];
      if (ta.real() != tb.real()) return ta.real() > tb.real();
      return ta.imag() > tb.imag();
    });

    const int kw = std::min(k, built);
    double worst = 0.0;
    for (int i = 0; i < kw; ++i) {
      const int idx = order[static_cast<std::size_t>(i)];
      const std::complex<double> rho = es.eigenvalues()[idx];
      const double res_op = beta * std::abs(es.eigenvectors()(built - 1, idx));
      worst = std::max(worst, res_op / std::max(std::abs(rho), 1e-300));
    }
    best_worst_res = std::min(best_worst_res, worst);

    // 1e-4 here is enough for the polish stage to take over; tighter Ritz
    // residuals are still preferred while restarts remain.
    const bool last = restart == opts.max_restarts;
    if (worst <= 1e-9 || built < ncv || (last && worst <= 1e-4)) {
      std::vector<RawPair> out;
      for (int i = 0; i < kw; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        RawPair p;
        p.value = s + 1.0 / es.eigenvalues()[idx];
        p.right = v.leftCols(built) * es.eigenvectors().col(idx);
        p.residual = pair_residual(m, p.value, p.right);
        out.push_back(std::move(p));
      }
      return out;
    }
    if (last) {
      std::ostringstream os;
      os << "Arnoldi did not converge: best relative Ritz residual " << best_worst_res;
      throw NumericalError(os.str());
    }

    // restart from the wanted directions with a grown Krylov space
    Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < kw; ++i) {
      const int idx = order[static_cast<std::size_t>(i)];
      const Eigen::VectorXcd x = v.leftCols(built) * es.eigenvectors().col(idx);
      next += x.real();
      next += x.imag();
    }
    next += 1e-3 * rng.normal_vector(n);
    const double nn = next.norm();
    v0 = nn < 1e-300 ? rng.normal_vector(n).normalized() : (next / nn).eval();
    ncv = std::min(n, ncv + ncv / 2);
  }
  throw NumericalError("Arnoldi restart loop exhausted");  // unreachable
}

// Phase-fix a complex vector so its largest-magnitude component is real
// positive; real eigenvectors come out with negligible imaginary part.
void phase_fix(Eigen::VectorXcd& x) {
  int imax = 0;
  double best = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]);
    if (a > best) {
      best = a;
      imax = i;
    }
  }
  if (best == 0.0) return;
  const std::complex<double> phase = x[imax] / std::abs(x[imax]);
  x /= phase;
}

}  // namespace

bool is_symmetric(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m, double rel_tol) {
  const SpMat a = m;
  const SpMat d = SpMat(a - SpMat(a.transpose()));
  double max_diff = 0.0;
  for (int c = 0; c < d.outerSize(); ++c)
    for (SpMat::InnerIterator it(d, c); it; ++it) max_diff = std::max(max_diff, std::abs(it.value()));
  double scale = 0.0;
  for (int c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  return max_diff <= rel_tol * std::max(scale, 1.0);
}

double default_shift(const operators::EllipticOperator& op) {
  const double bound = gershgorin_right_bound(op.matrix);
  return bound + 1.0 + 1e-3 * std::abs(bound);
}

double default_tau_c(const operators::EllipticOperator& op) {
  return 1e-8 * std::max(gershgorin_radius(op.matrix), 1.0);
}

std::vector<EigenPair> rightmost_eigs(const operators::EllipticOperator& op, int k, double shift,
                                      const EigOptions& opts) {
  if (k < 1) throw NumericalError("rightmost_eigs: k must be positive");
  const int n = op.size();
  if (n == 0) throw NumericalError("rightmost_eigs: empty operator");
  if (std::isnan(shift)) shift = default_shift(op);

  std::vector<RawPair> raw = n <= opts.dense_threshold
                                 ? dense_rightmost(op.matrix, k)
                                 : arnoldi_rightmost(op.matrix, k, shift, opts);

  const bool symmetric = is_symmetric(op.matrix);
  for (RawPair& p : raw) {
    phase_fix(p.right);
    if (symmetric) {
      p.value = std::complex<double>(p.value.real(), 0.0);
      p.right.imag().setZero();
    }
    if (p.residual > opts.tol) polish_pair(op.matrix, false, p, 3);
    if (p.residual > opts.tol) {
      std::ostringstream os;
      os << "eigenpair residual " << p.residual << " above tolerance " << opts.tol
         << " at eigenvalue " << p.value;
      throw NumericalError(os.str());
    }
  }

  // L2-normalize rights
  const double h2 = op.mask.grid().cell_area();
  for (RawPair& p : raw) p.right /= std::sqrt(h2) * p.right.norm();

  // left eigenvectors: transpose inverse iteration (or the right vectors
  // themselves in the self-adjoint case), then bi-orthogonal normalization
  // within eigenvalue clusters.
  std::vector<EigenPair> pairs(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    pairs[i].value = raw[i].value;
    pairs[i].right = raw[i].right;
    pairs[i].residual = raw[i].residual;
  }

  if (symmetric) {
    for (std::size_t i = 0; i < raw.size(); ++i) pairs[i].left = raw[i].right;
  } else {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      RawPair lp;
      lp.value = raw[i].value;
      Rng rng(opts.seed + 17 * (i + 1));
      Eigen::VectorXd re = rng.normal_vector(n), im = rng.normal_vector(n);
      lp.right = re.cast<std::complex<double>>() + std::complex<double>(0, 1) * im.cast<std::complex<double>>();
      polish_pair(op.matrix, true, lp, 3);
      pairs[i].left = lp.right;
    }
  }

  // cluster by eigenvalue, enforce h^2 * left^T * right = I on each cluster
  const double scale = std::max(1.0, std::abs(pairs.front().value));
  const double ctol = 1e-6 * scale;
  std::vector<bool> done(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> cluster{i};
    for (std::size_t j = i + 1; j < pairs.size(); ++j)
      if (!done[j] && std::abs(pairs[j].value - pairs[i].value) < ctol) cluster.push_back(j);
    const int c = static_cast<int>(cluster.size());
    Eigen::MatrixXcd lmat(n, c), rmat(n, c);
    for (int q = 0; q < c; ++q) {
      lmat.col(q) = pairs[cluster[static_cast<std::size_t>(q)]].left;
      rmat.col(q) = pairs[cluster[static_cast<std::size_t>(q)]].right;
    }
    const Eigen::MatrixXcd g = h2 * lmat.transpose() * rmat;
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 1e-10 * std::max(smax, 1.0))) {
      std::ostringstream os;
      os << "defective (or unresolved) eigenvalue near " << pairs[i].value
         << ": left/right pairing is singular";
      throw NumericalError(os.str());
    }
    const Eigen::MatrixXcd lnew = lmat * g.inverse().transpose();
    for (int q = 0; q < c; ++q) pairs[cluster[static_cast<std::size_t>(q)]].left = lnew.col(q);
    for (std::size_t q : cluster) done[q] = true;
  }

  std::sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) {
    if (a.value.real() != b.value.real()) return a.value.real() > b.value.real();
    return a.value.imag() > b.value.imag();
  });
  return pairs;
}

SpectralSplit classify(std::vector<EigenPair> eigs, double tau_c) {
  if (eigs.empty()) throw NumericalError("classify: no eigenvalues");
  std::sort(eigs.begin(), eigs.end(), [](const EigenPair& a, const EigenPair& b) {
    if (a.value.real() != b.value.real()) return a.value.real() > b.value.real();
    return a.value.imag() > b.value.imag();
  });
  SpectralSplit split;
  split.tau_c = tau_c;
  split.gap = std::numeric_limits<double>::infinity();
  for (EigenPair& p : eigs) {
    const double re = p.value.real();
    split.gap = std::min(split.gap, std::abs(re));
    if (std::abs(re) <= tau_c)
      split.sigma_c.push_back(std::move(p));
    else if (re < 0.0)
      split.sigma_s.push_back(std::move(p));
    else
      split.sigma_u.push_back(std::move(p));
  }
  split.hyperbolic = split.sigma_c.empty();
  split.d = static_cast<int>(split.sigma_u.size());
  return split;
}

SpectralSplit analyze(const operators::EllipticOperator& op, const EigOptions& opts, int k0) {
  const double tau_c = default_tau_c(op);
  const int n = op.size();
  SpectralSplit split;
  for (int k : {k0, k0 + 4, k0 + 12, k0 + 24}) {
    k = std::min(k, n);
    split = classify(rightmost_eigs(op, k, std::numeric_limits<double>::quiet_NaN(), opts), tau_c);
    const std::size_t nonstable = split.sigma_u.size() + split.sigma_c.size();
    if (split.sigma_s.size() >= 2) {
      if (nonstable == 0) return split;
      const double lowest_nonstable = nonstable ? (split.sigma_c.empty()
                                                       ? split.sigma_u.back().value.real()
                                                       : split.sigma_c.back().value.real())
                                                : 0.0;
      const double top_stable = split.sigma_s.front().value.real();
      if (lowest_nonstable - top_stable >= 10.0 * tau_c) return split;
    }
    if (k == n) return split;
  }
  throw NumericalError("spectrum analysis: could not separate the computed tail; increase k");
}

std::string to_string(SplitKind kind) {
  return kind == SplitKind::Stable ? "stable" : "unstable";
}

Eigen::VectorXd Projector::coords(const Eigen::VectorXd& u) const {
  if (d == 0) return Eigen::VectorXd(0);
  return grid.cell_area() * (dual.transpose() * u);
}

Eigen::VectorXd Projector::embed(const Eigen::VectorXd& c) const {
  if (d == 0) throw NumericalError("embed: empty X+");
  return basis * c;
}

Eigen::VectorXd Projector::project_plus(const Eigen::VectorXd& u) const {
  if (d == 0) return Eigen::VectorXd::Zero(u.size());
  return basis * coords(u);
}

Eigen::VectorXd Projector::project_minus(const Eigen::VectorXd& u) const {
  return u - project_plus(u);
}

Projector build_projector(const operators::EllipticOperator& op, const SpectralSplit& split,
                          SplitKind kind, std::uint64_t seed, double residual_tol) {
  if (!split.hyperbolic)
    throw NumericalError("build_projector: split is not hyperbolic (sigma_c nonempty)");
  const int n = op.size();
  const double h2 = op.mask.grid().cell_area();

  // X+ = X^u in both split kinds once sigma_c is empty.
  const std::vector<EigenPair>& plus = split.sigma_u;

  std::vector<Eigen::VectorXd> rcols, dcols;
  std::vector<bool> used(plus.size(), false);
  const double scale = plus.empty() ? 1.0 : std::max(1.0, std::abs(plus.front().value));
  for (std::size_t i = 0; i < plus.size(); ++i) {
    if (used[i]) continue;
    const EigenPair& p = plus[i];
    if (std::abs(p.value.imag()) <= 1e-9 * scale) {
      Eigen::VectorXd r = p.right.real();
      Eigen::VectorXd l = p.left.real();
      const double pairing = h2 * l.dot(r);
      if (std::abs(pairing) < 1e-10)
        throw NumericalError("defective eigenvalue at " + std::to_string(p.value.real()) +
                             ": left/right pairing vanishes");
      rcols.push_back(std::move(r));
      dcols.push_back(l / pairing);
      used[i] = true;
    } else {
      // complex pair: find the conjugate partner
      std::size_t partner = plus.size();
      for (std::size_t j = i + 1; j < plus.size(); ++j)
        if (!used[j] && std::abs(plus[j].value - std::conj(p.value)) < 1e-6 * scale) {
          partner = j;
          break;
        }
      if (partner == plus.size())
        throw NumericalError("complex eigenvalue without conjugate partner in sigma_u; increase k");
      const EigenPair& rep = p.value.imag() > 0 ? p : plus[partner];
      rcols.push_back(rep.right.real());
      rcols.push_back(rep.right.imag());
      dcols.push_back(2.0 * rep.left.real());
      dcols.push_back(-2.0 * rep.left.imag());
      used[i] = used[partner] = true;
    }
  }

  Projector proj;
  proj.kind = kind;
  proj.grid = op.mask.grid();
  proj.d = static_cast<int>(rcols.size());
  if (proj.d == 0) {
    proj.basis.resize(n, 0);
    proj.dual.resize(n, 0);
    proj.reduced.resize(0, 0);
    proj.norm_plus = 0.0;
    proj.norm_minus = 1.0;
    return proj;
  }

  Eigen::MatrixXd r(n, proj.d), dl(n, proj.d);
  for (int c = 0; c < proj.d; ++c) {
    r.col(c) = rcols[static_cast<std::size_t>(c)];
    dl.col(c) = dcols[static_cast<std::size_t>(c)];
  }

  // L2-orthonormalize the basis; transform the duals to keep h^2 D^T B = I.
  const double h = std::sqrt(h2);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(h * r);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, proj.d);
  Eigen::MatrixXd t = qr.matrixQR().topRows(proj.d).triangularView<Eigen::Upper>();
  for (int c = 0; c < proj.d; ++c)
    if (t(c, c) < 0) {
      t.row(c) *= -1.0;
      q.col(c) *= -1.0;
    }
  proj.basis = q / h;
  proj.dual = dl * t.transpose();
  proj.reduced = -h2 * (proj.dual.transpose() * (op.matrix * proj.basis));

  proj.norm_plus = smallmat::low_rank_norm(proj.basis, h2 * proj.dual);
  proj.norm_minus = smallmat::identity_minus_low_rank_norm(proj.basis, h2 * proj.dual);

  // recorded idempotency / commutation residuals on random vectors
  Rng rng(seed);
  const double mscale = gershgorin_radius(op.matrix);
  double idem = 0.0, comm = 0.0;
  for (int s = 0; s < 50; ++s) {
    const Eigen::VectorXd u = rng.normal_vector(n);
    const double un = geometry::norm_l2(op.mask.grid(), u);
    const Eigen::VectorXd pu = proj.project_plus(u);
    idem = std::max(idem, geometry::norm_l2(op.mask.grid(), proj.project_plus(pu) - pu) / un);
    const Eigen::VectorXd au = -(op.matrix * u);
    const Eigen::VectorXd apu = -(op.matrix * pu);
    comm = std::max(comm, geometry::norm_l2(op.mask.grid(), apu - proj.project_plus(au)) /
                              (mscale * un));
  }
  proj.idem_residual = idem;
  proj.commute_residual = comm;
  (void)residual_tol;
  return proj;
}

SubspaceBasis plus_basis(const Projector& proj) {
  SubspaceBasis b;
  b.vectors = proj.basis;
  b.conditioning = proj.d > 0 ? 1.0 : 0.0;
  if (proj.d > 0) {
    const Eigen::MatrixXd w = std::sqrt(proj.grid.cell_area()) * proj.basis;
    b.conditioning = w.jacobiSvd().singularValues().minCoeff();
  }
  return b;
}

SubspaceBasis pushforward_basis(const SubspaceBasis& f, const DomainMask& from,
                                const DomainMask& to, const Projector& proj_n,
                                double conditioning_min) {
  if (proj_n.d != f.vectors.cols())
    throw NumericalError("pushforward_basis: dimension mismatch between bases");
  SubspaceBasis out;
  out.vectors.resize(to.active_count(), f.vectors.cols());
  for (int j = 0; j < f.vectors.cols(); ++j)
    out.vectors.col(j) = proj_n.project_plus(geometry::transfer(f.vectors.col(j), from, to));
  const Eigen::MatrixXd w = std::sqrt(to.grid().cell_area()) * out.vectors;
  out.conditioning = w.jacobiSvd().singularValues().minCoeff();
  if (out.conditioning < conditioning_min)
    throw NumericalError("pushforward basis conditioning " + std::to_string(out.conditioning) +
                         " below threshold; domain too far from the limit or split mismatch");
  return out;
}

double projector_gap(const Projector& proj_n, const DomainMask& mask_n, const Projector& proj,
                     const DomainMask& mask) {
  if (!(mask_n.grid() == mask.grid())) throw NumericalError("projector_gap: grids differ");
  const int nd = mask.grid().nodes();
  const double h2 = mask.grid().cell_area();
  auto lift = [&](const Eigen::MatrixXd& cols, const DomainMask& m) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nd, cols.cols());
    for (int j = 0; j < cols.cols(); ++j) out.col(j) = geometry::extend_by_zero(cols.col(j), m);
    return out;
  };
  const Eigen::MatrixXd un = lift(proj_n.basis, mask_n);
  const Eigen::MatrixXd vn = lift(h2 * proj_n.dual, mask_n);
  const Eigen::MatrixXd u = lift(proj.basis, mask);
  const Eigen::MatrixXd v = lift(h2 * proj.dual, mask);
  return smallmat::low_rank_diff_norm(un, vn, u, v);
}

}  // namespace mperturb::spectral
