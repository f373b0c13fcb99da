#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "mperturb/dynamics.hpp"
#include "mperturb/manifolds.hpp"
#include "mperturb/operators.hpp"
#include "mperturb/spectral.hpp"

namespace mperturb {

/// Full problem definition: coefficients, nonlinearity, split and the
/// manifold/time/norm parameters. Zero values mean "derive automatically".
struct ProblemConfig {
  geometry::GridSpec grid{0.0, 0.0, 1.0, 63};

  std::string coeff_preset = "constant";  // constant | affine | trigonometric
  double alpha0 = 1.0;
  double a11 = 1.0, a22 = 1.0, a12 = 0.0;
  double drift_a1 = 0.0, drift_a2 = 0.0;
  double adv_b1 = 0.0, adv_b2 = 0.0;
  double c0 = 0.0;
  double coeff_grad_x = 0.0, coeff_grad_y = 0.0;  // affine modulation of a11, a22, c0
  double coeff_trig_amp = 0.0;                    // trigonometric modulation amplitude

  dynamics::NonlinPreset nonlin = dynamics::NonlinPreset::Cubic;
  double amplitude = 25.0;
  double delta = 0.02;
  double eta = 0.0;  // 0 = auto (4.5 * measured epsilon)
  int lipschitz_samples = 30;

  spectral::SplitKind split = spectral::SplitKind::Unstable;

  double r_mesh = 0.0;  // 0 = 0.45 * delta
  int mesh_points = 21;
  double tol = 1e-8;
  int m_max = 40;
  double t_map = 0.0;  // 0 = solve K = 0.5
  double t_stab = 0.0; // 0 = 10 / sigma
  int sample_refine = 2;
  int stable_directions = 16;
  int stable_radii = 2;
  int cone_stride = 40;
  double shoot_tol = 2e-4;
  double delta1 = 0.0, delta2 = 0.0;  // 0 = from r_mesh with the kind's ordering
  double delta_hat = 0.0;             // 0 = from delta1, delta2 and the projector norms

  dynamics::Scheme scheme = dynamics::Scheme::CnAb;
  double dt = 0.0;
  double t_horizon = 1.0;  // 0 = min(1e-3, 0.1/|lambda_max|), snapped to divide t_map
  dynamics::NormOptions norm_opts;
  dynamics::DichotomyCaps caps;  // family-uniform spectral bounds (sweeps set these)
  int fit_samples = 100;

  std::uint64_t seed = 1234;
  int threads = 0;
  int eig_k0 = 8;
  bool export_matrix = false;
};

operators::CoefficientField build_coefficients(const ProblemConfig& cfg);

/// One mask, fully prepared: operator, spectrum, projector, dichotomy
/// constants, renorm evaluator, modified semiflow, cone parameters and the
/// manifold context wired to all of it. Not copyable; build via the
/// factories below.
struct Instance {
  geometry::DomainMask mask;
  operators::EllipticOperator op;
  spectral::SpectralSplit split;
  spectral::Projector proj;
  dynamics::CutoffNonlinearity nl;
  dynamics::DichotomyConstants dc;
  manifolds::ConeParams cone;
  manifolds::FixedPointSchedule sched;
  std::unique_ptr<dynamics::LinearPropagator> prop;
  std::unique_ptr<dynamics::RenormEvaluator> renorm;
  std::unique_ptr<dynamics::Semiflow> flow;
  manifolds::ManifoldContext ctx;

  explicit Instance(geometry::DomainMask m, operators::EllipticOperator o)
      : mask(std::move(m)), op(std::move(o)) {}
  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;
};

/// Builds the instance for a mask. The epsilon-feasibility chain runs before
/// any eigen-solve: cutoff measurement first, spectral analysis after.
std::unique_ptr<Instance> build_instance(const ProblemConfig& cfg,
                                         const geometry::DomainMask& mask);

/// Member instance with the uniform parameters (alpha, beta, gamma, mu, nu,
/// epsilon, radii, schedule) copied from the limit instance. Throws when the
/// member is not hyperbolic or its unstable dimension differs.
std::unique_ptr<Instance> build_member_instance(const ProblemConfig& cfg,
                                                const geometry::DomainMask& mask,
                                                const Instance& limit);

}  // namespace mperturb
