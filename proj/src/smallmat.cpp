#include "mperturb/smallmat.hpp"

#include <cmath>

namespace mperturb::smallmat {

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double nrm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (nrm > 0.5) squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / 0.5))));
  const Eigen::MatrixXd as = a / std::ldexp(1.0, squarings);

  // Pade(6,6) of exp at 0
  const int order = 6;
  Eigen::MatrixXd num = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd den = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  double c = 1.0;
  for (int k = 1; k <= order; ++k) {
    c *= static_cast<double>(order - k + 1) / (k * (2 * order - k + 1));
    term = term * as;
    num += c * term;
    den += (k % 2 == 0 ? c : -c) * term;
  }
  Eigen::MatrixXd x = den.partialPivLu().solve(num);
  for (int s = 0; s < squarings; ++s) x = x * x;
  return x;
}

double low_rank_norm(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.cols() == 0 || v.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> su(u, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::JacobiSVD<Eigen::MatrixXd> sv(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd core = su.singularValues().asDiagonal() * su.matrixV().transpose() *
                               sv.matrixV() * sv.singularValues().asDiagonal();
  return core.jacobiSvd().singularValues().maxCoeff();
}

double low_rank_diff_norm(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& v1,
                          const Eigen::MatrixXd& u2, const Eigen::MatrixXd& v2) {
  const auto rows = u1.rows();
  Eigen::MatrixXd u(rows, u1.cols() + u2.cols());
  u << u1, -u2;
  Eigen::MatrixXd v(rows, v1.cols() + v2.cols());
  v << v1, v2;
  return low_rank_norm(u, v);
}

double identity_minus_low_rank_norm(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.cols() == 0) return 1.0;
  const auto n = u.rows();
  Eigen::MatrixXd uv(n, u.cols() + v.cols());
  uv << u, v;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(uv);
  const auto q = std::min<Eigen::Index>(uv.cols(), n);
  const Eigen::MatrixXd w = qr.householderQ() * Eigen::MatrixXd::Identity(n, q);

  const Eigen::MatrixXd wu = w.transpose() * u;
  const Eigen::MatrixXd wv = w.transpose() * v;
  const Eigen::MatrixXd gram = u.transpose() * u;
  const Eigen::MatrixXd s =
      -wv * wu.transpose() - wu * wv.transpose() + wv * gram * wv.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  double lam = es.eigenvalues().maxCoeff();
  if (q < n) lam = std::max(lam, 0.0);
  return std::sqrt(1.0 + lam);
}

}  // namespace mperturb::smallmat
