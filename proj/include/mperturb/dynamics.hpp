#pragma once

#include <Eigen/SparseLU>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mperturb/operators.hpp"
#include "mperturb/spectral.hpp"

namespace mperturb::dynamics {

using geometry::DomainMask;

enum class NonlinPreset { Zero, Cubic, Saturating, Sine };
NonlinPreset nonlin_preset_from(const std::string& name);
std::string to_string(NonlinPreset preset);

/// Source term g(u) with the radial cutoff Psi(||u||_L2) that truncates it
/// outside the ball of radius 2*delta. All presets have g(0) = 0 and
/// g'(0) = 0, so 0 stays an equilibrium and the local Lipschitz constant
/// shrinks with delta.
struct CutoffNonlinearity {
  NonlinPreset preset = NonlinPreset::Zero;
  double amplitude = 0.0;
  double delta = 0.0;
  double eta = 0.0;            // budget; epsilon < eta/4 is enforced
  double epsilon = 0.0;        // measured Lipschitz constant of the cutoff field
  double epsilon_local = 0.0;  // measured on the raw field inside B(0, 2*delta)

  double g(double xi) const;
};

/// Piecewise factor: 1 inside delta, linear taper, 0 beyond 2*delta.
double cutoff_factor(double u_norm, double delta);

Eigen::VectorXd raw_f(const CutoffNonlinearity& nl, const DomainMask& mask,
                      const Eigen::VectorXd& u);
Eigen::VectorXd modified_f(const CutoffNonlinearity& nl, const DomainMask& mask,
                           const Eigen::VectorXd& u);

/// Sampled Lipschitz estimate of the cutoff field on B(0, radius), times a
/// 1.5 safety factor. Pairs are drawn on a dyadic scale ladder anchored at
/// `radius`, so doubling the radius only extends the sampled set and the
/// estimate is monotone. Deterministic for a fixed seed.
double estimate_lipschitz(const CutoffNonlinearity& nl, const DomainMask& mask, double radius,
                          int samples, std::uint64_t seed);

/// Builds the cutoff nonlinearity and measures its constants. eta <= 0
/// selects eta = 4.5 * epsilon; an explicit eta must satisfy epsilon < eta/4.
CutoffNonlinearity make_cutoff(const DomainMask& mask, NonlinPreset preset, double amplitude,
                               double delta, double eta, int samples, std::uint64_t seed);

struct DichotomyConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double M1 = 1.0;
  double M2 = 1.0;
  double sigma_decay = 0.0;   // sigma in ||S^s(t)|| <= M e^{-sigma t}
  double stable_bound = 0.0;  // computed distance of sigma^s to the imaginary axis
};

enum class Scheme { CnAb, ExpEuler };
Scheme scheme_from(const std::string& name);
std::string to_string(Scheme scheme);

struct SemiflowConfig {
  Scheme scheme = Scheme::CnAb;
  double dt = 1e-3;
  double t_horizon = 1.0;  // default horizon for trajectory dumps
  int sample_stride = 8;
};

double default_dt(const spectral::SpectralSplit& split);

/// Crank-Nicolson stepping for the linear semigroup e^{-Mt} with cached
/// factorizations on a dyadic dt ladder.
class LinearPropagator {
public:
  explicit LinearPropagator(const operators::EllipticOperator& op);

  const operators::EllipticOperator& op() const { return *op_; }

  /// One CN step of size dt (factorization cached per dt).
  Eigen::VectorXd step(const Eigen::VectorXd& v, double dt) const;

  /// One TR-BDF2 step; L-stable and second order, used for coarse steps
  /// where CN's weak damping would let stiff modes survive. Its stability
  /// function stays below e^{-x} for x > 0, so the weighted-curve scan never
  /// sees spurious growth.
  Eigen::VectorXd step_damped(const Eigen::VectorXd& v, double dt) const;

  /// Advance by t >= 0 with uniform substeps of size at most dt_max.
  Eigen::VectorXd advance(Eigen::VectorXd v, double t, double dt_max) const;

private:
  struct Stepper {
    Eigen::SparseMatrix<double, Eigen::RowMajor> rhs;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu;
  };
  struct TrBdf2Stepper {
    Eigen::SparseMatrix<double, Eigen::RowMajor> rhs1;  // I - gamma*dt/2 * M
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu1;  // I + gamma*dt/2 * M
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu2;  // I + c2*dt * M
  };
  const Stepper& stepper(double dt) const;
  const TrBdf2Stepper& damped_stepper(double dt) const;

  const operators::EllipticOperator* op_;
  mutable std::map<std::int64_t, Stepper> cache_;
  mutable std::map<std::int64_t, TrBdf2Stepper> damped_cache_;
};

/// e^{-At} v  (t >= 0), second order in dt.
Eigen::VectorXd semigroup_action(const operators::EllipticOperator& op, const Eigen::VectorXd& v,
                                 double t, double dt = 1e-3);

/// Exact group on X+ in basis coordinates, valid for all real t.
Eigen::VectorXd group_action_plus(const spectral::Projector& proj, const Eigen::VectorXd& coords,
                                  double t);

struct NormOptions {
  double dt0 = 1e-3;          // first substep of the weighted-curve scan
  int steps_per_level = 4;    // steps taken before dt doubles
  double decay_target = 1e-3; // certificate: curve at T_max <= target * running max
  double t_max = 0.0;         // 0 = automatic from the dichotomy constants
  int max_doublings = 3;
};

/// Renormed norms on X- and X+: suprema of the weighted semigroup/group
/// curves. The minus side scans e^{-alpha t} ||S(t)v|| by CN substepping on
/// a dyadic ladder and certifies the truncation; the plus side uses the
/// exact d x d group on a cached grid of negative times.
class RenormEvaluator {
public:
  RenormEvaluator(const LinearPropagator& prop, const spectral::Projector& proj,
                  const DichotomyConstants& dc, const NormOptions& opts = {});

  double minus_norm(const Eigen::VectorXd& v) const;
  double plus_norm_coords(const Eigen::VectorXd& coords) const;
  double plus_norm(const Eigen::VectorXd& w) const;

  const DichotomyConstants& constants() const { return dc_; }
  double minus_t_max() const { return t_max_minus_; }

private:
  const LinearPropagator* prop_;
  const spectral::Projector* proj_;
  DichotomyConstants dc_;
  NormOptions opts_;
  double t_max_minus_ = 0.0;
  std::vector<double> plus_times_;
  std::vector<Eigen::MatrixXd> plus_group_;  // expm(reduced * t) on the grid
};

/// Family-uniform caps on the spectral bounds (0 = use the instance's own
/// spectrum). A sweep passes the minima over all members here so one set of
/// exponents works for the whole family.
struct DichotomyCaps {
  double stable_bound = 0.0;  // cap on the distance of sigma^s to the axis
  double unstable_min = 0.0;  // cap on min Re sigma^u
};

/// Growth exponents per the split recipe (alpha = -sigma for the stable
/// split, 0 < alpha < beta < min Re sigma_u for the unstable one).
DichotomyConstants choose_exponents(const spectral::Projector& proj,
                                    const spectral::SpectralSplit& split,
                                    const DichotomyCaps& caps = {});

/// Fits the prefactors M1, M2 for given exponents over random vectors with a
/// 1.1 safety factor; exponents in dc are kept.
DichotomyConstants fit_prefactors(const LinearPropagator& prop, const spectral::Projector& proj,
                                  DichotomyConstants dc, const NormOptions& opts = {},
                                  std::uint64_t seed = 4242, int fit_samples = 100);

DichotomyConstants fit_dichotomy(const LinearPropagator& prop, const spectral::Projector& proj,
                                 const spectral::SpectralSplit& split,
                                 const NormOptions& opts = {}, std::uint64_t seed = 4242,
                                 int fit_samples = 100, const DichotomyCaps& caps = {});

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;

  const Eigen::VectorXd& back() const { return states.back(); }
};

/// Semiflow of the modified system u' + Au = f~(u). CN-AB: Crank-Nicolson
/// diffusion with Adams-Bashforth-2 source (second order); ExpEuler:
/// Pade(1,1) exponential step with a first-order source.
class Semiflow {
public:
  Semiflow(const operators::EllipticOperator& op, const CutoffNonlinearity& nl,
           SemiflowConfig config);

  Eigen::VectorXd flow(const Eigen::VectorXd& u0, double t) const;
  Trajectory evolve(const Eigen::VectorXd& u0, double t) const;

  struct WhileResult {
    double kept_time = 0.0;  // last checked time at which the condition held
    double violation = 0.0;  // ratio at the first violated check (0 if none)
  };

  /// Steps forward checking `violation_of(t, u)` every `stride` steps (and at
  /// time 0 and t); the condition holds while the returned ratio <= 1 + 1e-9.
  /// Stops at the first violation.
  WhileResult run_while(const Eigen::VectorXd& u0, double t, int stride,
                        const std::function<double(double, const Eigen::VectorXd&)>& violation_of)
      const;

  const SemiflowConfig& config() const { return config_; }
  const operators::EllipticOperator& op() const { return *op_; }

private:
  Trajectory run(const Eigen::VectorXd& u0, double t, bool keep_samples) const;
  Eigen::VectorXd step_once(const Eigen::VectorXd& u, Eigen::VectorXd& f_prev, bool first) const;

  const operators::EllipticOperator* op_;
  const CutoffNonlinearity* nl_;
  SemiflowConfig config_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> rhs_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

Trajectory evolve(const SemiflowConfig& config, const operators::EllipticOperator& op,
                  const CutoffNonlinearity& nl, const Eigen::VectorXd& u0, double t);

}  // namespace mperturb::dynamics
