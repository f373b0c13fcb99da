#pragma once

#include <Eigen/Dense>

namespace mperturb::smallmat {

/// Matrix exponential of a small dense matrix (scaling and squaring with a
/// Pade(6) approximant; intended for the reduced d x d blocks, d <= ~10).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

/// Largest singular value of the low-rank product U * V^T without forming it.
double low_rank_norm(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v);

/// Largest singular value of (U1 V1^T - U2 V2^T).
double low_rank_diff_norm(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& v1,
                          const Eigen::MatrixXd& u2, const Eigen::MatrixXd& v2);

/// Largest singular value of (I - U V^T).
double identity_minus_low_rank_norm(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v);

}  // namespace mperturb::smallmat
