#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mperturb/instance.hpp"

namespace mperturb::perturbation {

/// max over `samples_n` of the min L2(D) distance to `samples`; exact over
/// the given finite clouds (both zero-extended to the full grid).
double upper_semidistance(const std::vector<Eigen::VectorXd>& samples_n,
                          const std::vector<Eigen::VectorXd>& samples, double spacing);

/// Mirror image with the roles swapped: max over `samples` of the min
/// distance into `samples_n`.
double lower_semidistance(const std::vector<Eigen::VectorXd>& samples,
                          const std::vector<Eigen::VectorXd>& samples_n, double spacing);

struct MemberRecord {
  int n = 0;
  bool rejected = false;
  std::string flag;
  double upper = 0.0;
  double lower = 0.0;
  double gap_u = 0.0;
  double gap_c = 0.0;
  std::array<double, 3> eig_err{0.0, 0.0, 0.0};
  double measure_gap = 0.0;     // |Omega_n| - |Omega|
  double indicator_gap_sq = 0.0;  // ||1_{Omega_n} - 1_{Omega}||^2_{L2(D)}
  int sample_count = 0;
  double sampling_error = 0.0;  // semidistance change under halved sample density
  double basis_conditioning = 0.0;
};

struct SemicontinuityReport {
  std::string family;
  spectral::SplitKind kind = spectral::SplitKind::Unstable;
  bool hypothesis_met = true;  // stable kind: |Omega_n| -> |Omega| check
  double alpha = 0, beta = 0, gamma = 0, mu = 0, nu = 0, epsilon = 0, delta_hat = 0;
  int limit_d = 0;
  int limit_samples = 0;
  std::vector<MemberRecord> records;
};

/// Sweep artifacts: the report plus the instances and patches it was
/// computed from (rejected members hold null/empty entries).
struct SweepResult {
  SemicontinuityReport report;
  std::unique_ptr<Instance> limit;
  manifolds::ManifoldPatch limit_patch;
  std::vector<std::unique_ptr<Instance>> members;
  std::vector<manifolds::ManifoldPatch> member_patches;
};

/// Runs the full family experiment for one manifold kind: limit problem
/// first, then every member with the uniform parameters, semidistances
/// against the limit patch over one shared delta_hat.
SweepResult sweep(const geometry::DomainFamily& family, const ProblemConfig& cfg,
                  spectral::SplitKind kind);

struct AlignmentRow {
  int n = 0;
  std::vector<double> probe_errors;  // ||h_n(P_n u_i) - h(P u_i)||_{L2(D)} per probe
};

/// Pointwise graph comparison over a fixed probe set (unstable sweeps only).
std::vector<AlignmentRow> basis_alignment(const SweepResult& result, int probes = 10,
                                          std::uint64_t seed = 2024);

}  // namespace mperturb::perturbation
