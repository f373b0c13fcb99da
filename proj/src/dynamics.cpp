#include "mperturb/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mperturb/kernels.hpp"
#include "mperturb/rng.hpp"
#include "mperturb/smallmat.hpp"

namespace mperturb::dynamics {

NonlinPreset nonlin_preset_from(const std::string& name) {
  if (name == "zero") return NonlinPreset::Zero;
  if (name == "cubic") return NonlinPreset::Cubic;
  if (name == "saturating") return NonlinPreset::Saturating;
  if (name == "sine") return NonlinPreset::Sine;
  throw ConfigError("unknown nonlinearity preset '" + name + "'");
}

std::string to_string(NonlinPreset preset) {
  switch (preset) {
    case NonlinPreset::Zero: return "zero";
    case NonlinPreset::Cubic: return "cubic";
    case NonlinPreset::Saturating: return "saturating";
    case NonlinPreset::Sine: return "sine";
  }
  return "?";
}

Scheme scheme_from(const std::string& name) {
  if (name == "cn-ab") return Scheme::CnAb;
  if (name == "exp-euler") return Scheme::ExpEuler;
  throw ConfigError("unknown time scheme '" + name + "' (cn-ab | exp-euler)");
}

std::string to_string(Scheme scheme) { return scheme == Scheme::CnAb ? "cn-ab" : "exp-euler"; }

double CutoffNonlinearity::g(double xi) const {
  switch (preset) {
    case NonlinPreset::Zero: return 0.0;
    case NonlinPreset::Cubic: return amplitude * xi * xi * xi;
    case NonlinPreset::Saturating: return amplitude * xi * xi / (1.0 + xi * xi);
    case NonlinPreset::Sine: return amplitude * (std::sin(xi) - xi);
  }
  return 0.0;
}

double cutoff_factor(double u_norm, double delta) {
  if (!(delta > 0.0)) throw NumericalError("cutoff_factor: delta must be positive");
  if (u_norm <= delta) return 1.0;
  if (u_norm >= 2.0 * delta) return 0.0;
  return 2.0 - u_norm / delta;
}

Eigen::VectorXd raw_f(const CutoffNonlinearity& nl, const DomainMask& mask,
                      const Eigen::VectorXd& u) {
  (void)mask;
  Eigen::VectorXd out(u.size());
  const std::ptrdiff_t n = u.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = nl.g(u[i]);
  return out;
}

Eigen::VectorXd modified_f(const CutoffNonlinearity& nl, const DomainMask& mask,
                           const Eigen::VectorXd& u) {
  if (nl.preset == NonlinPreset::Zero) return Eigen::VectorXd::Zero(u.size());
  const double psi = cutoff_factor(geometry::norm_l2(mask.grid(), u), nl.delta);
  if (psi == 0.0) return Eigen::VectorXd::Zero(u.size());
  Eigen::VectorXd out = raw_f(nl, mask, u);
  out *= psi;
  return out;
}

namespace {

Eigen::VectorXd smooth_field(const DomainMask& mask, Rng& rng) {
  const geometry::GridSpec& g = mask.grid();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mask.active_count());
  for (int mode = 0; mode < 3; ++mode) {
    const int k = 1 + static_cast<int>(rng.next_u64() % 3);
    const int l = 1 + static_cast<int>(rng.next_u64() % 3);
    const double amp = rng.normal();
    for (int loc = 0; loc < mask.active_count(); ++loc) {
      const int p = mask.full_of_local(loc);
      const int i = p % g.m + 1, j = p / g.m + 1;
      const double sx = (g.x(i) - g.x0) / g.side, sy = (g.y(j) - g.y0) / g.side;
      v[loc] += amp * std::sin(k * M_PI * sx) * std::sin(l * M_PI * sy);
    }
  }
  return v;
}

template <typename Field>
double sampled_lipschitz(Field&& field, const DomainMask& mask, double radius, int samples,
                         std::uint64_t seed) {
  if (!(radius > 0.0)) throw NumericalError("sampled lipschitz: radius must be positive");
  const int n = mask.active_count();
  const geometry::GridSpec& grid = mask.grid();
  constexpr int kLevels = 9;
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    Rng rng(seed + 1000003ULL * static_cast<std::uint64_t>(i));
    Eigen::VectorXd base, dir;
    if (i % 3 == 2) {
      base = smooth_field(mask, rng);
      dir = smooth_field(mask, rng);
    } else {
      base = rng.normal_vector(n);
      dir = rng.normal_vector(n);
    }
    const double bn = geometry::norm_l2(grid, base);
    const double dn = geometry::norm_l2(grid, dir);
    if (bn == 0.0 || dn == 0.0) continue;
    base /= bn;
    dir /= dn;
    const bool nearby = i % 3 == 1;
    for (int level = 0; level < kLevels; ++level) {
      const double s = radius * std::ldexp(1.0, -level);
      const Eigen::VectorXd u = s * base;
      const Eigen::VectorXd v = nearby ? (u + 0.05 * s * dir).eval() : (s * dir).eval();
      const double dist = geometry::norm_l2(grid, u - v);
      if (dist < 1e-14 * s) continue;
      const double ratio = geometry::norm_l2(grid, field(u) - field(v)) / dist;
      worst = std::max(worst, ratio);
    }
  }
  return 1.5 * worst;
}

}  // namespace

double estimate_lipschitz(const CutoffNonlinearity& nl, const DomainMask& mask, double radius,
                          int samples, std::uint64_t seed) {
  return sampled_lipschitz(
      [&](const Eigen::VectorXd& u) { return modified_f(nl, mask, u); }, mask, radius, samples,
      seed);
}

CutoffNonlinearity make_cutoff(const DomainMask& mask, NonlinPreset preset, double amplitude,
                               double delta, double eta, int samples, std::uint64_t seed) {
  if (!(delta > 0.0)) throw ConfigError("nonlinearity.delta must be positive");
  CutoffNonlinearity nl;
  nl.preset = preset;
  nl.amplitude = amplitude;
  nl.delta = delta;
  nl.epsilon = estimate_lipschitz(nl, mask, 3.0 * delta, samples, seed);
  nl.epsilon_local = sampled_lipschitz(
      [&](const Eigen::VectorXd& u) { return raw_f(nl, mask, u); }, mask, 2.0 * delta, samples,
      seed + 7);
  if (eta > 0.0) {
    nl.eta = eta;
    if (!(nl.epsilon < eta / 4.0)) {
      std::ostringstream os;
      os << "nonlinearity: measured epsilon " << nl.epsilon << " violates epsilon < eta/4 = "
         << eta / 4.0 << "; shrink delta or the amplitude";
      throw ConfigError(os.str());
    }
  } else {
    nl.eta = std::max(4.5 * nl.epsilon, 1e-12);
  }
  return nl;
}

double default_dt(const spectral::SpectralSplit& split) {
  double maxabs = 0.0;
  for (const auto* cls : {&split.sigma_s, &split.sigma_c, &split.sigma_u})
    for (const auto& p : *cls) maxabs = std::max(maxabs, std::abs(p.value.real()));
  if (maxabs <= 0.0) return 1e-3;
  return std::min(1e-3, 0.1 / maxabs);
}

LinearPropagator::LinearPropagator(const operators::EllipticOperator& op) : op_(&op) {}

const LinearPropagator::Stepper& LinearPropagator::stepper(double dt) const {
  const std::int64_t key = std::llround(dt * 1e12);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  Stepper st;
  Eigen::SparseMatrix<double, Eigen::RowMajor> id(op_->size(), op_->size());
  id.setIdentity();
  st.rhs = id - (dt / 2.0) * op_->matrix;
  Eigen::SparseMatrix<double> lhs = id + (dt / 2.0) * op_->matrix;
  st.lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  st.lu->compute(lhs);
  if (st.lu->info() != Eigen::Success)
    throw NumericalError("Crank-Nicolson factorization failed at dt = " + std::to_string(dt));
  return cache_.emplace(key, std::move(st)).first->second;
}

Eigen::VectorXd LinearPropagator::step(const Eigen::VectorXd& v, double dt) const {
  const Stepper& st = stepper(dt);
  Eigen::VectorXd rhs(v.size());
  kernels::spmv(st.rhs, {v.data(), static_cast<std::size_t>(v.size())},
                {rhs.data(), static_cast<std::size_t>(rhs.size())});
  return st.lu->solve(rhs);
}

const LinearPropagator::TrBdf2Stepper& LinearPropagator::damped_stepper(double dt) const {
  const std::int64_t key = std::llround(dt * 1e12);
  auto it = damped_cache_.find(key);
  if (it != damped_cache_.end()) return it->second;

  const double gamma = 2.0 - std::sqrt(2.0);
  TrBdf2Stepper st;
  Eigen::SparseMatrix<double, Eigen::RowMajor> id(op_->size(), op_->size());
  id.setIdentity();
  st.rhs1 = id - (gamma * dt / 2.0) * op_->matrix;
  st.lu1 = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  st.lu1->compute(Eigen::SparseMatrix<double>(id + (gamma * dt / 2.0) * op_->matrix));
  st.lu2 = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  st.lu2->compute(
      Eigen::SparseMatrix<double>(id + ((1.0 - gamma) / (2.0 - gamma) * dt) * op_->matrix));
  if (st.lu1->info() != Eigen::Success || st.lu2->info() != Eigen::Success)
    throw NumericalError("TR-BDF2 factorization failed at dt = " + std::to_string(dt));
  return damped_cache_.emplace(key, std::move(st)).first->second;
}

Eigen::VectorXd LinearPropagator::step_damped(const Eigen::VectorXd& v, double dt) const {
  const double gamma = 2.0 - std::sqrt(2.0);
  const TrBdf2Stepper& st = damped_stepper(dt);
  Eigen::VectorXd rhs(v.size());
  kernels::spmv(st.rhs1, {v.data(), static_cast<std::size_t>(v.size())},
                {rhs.data(), static_cast<std::size_t>(rhs.size())});
  const Eigen::VectorXd mid = st.lu1->solve(rhs);
  const double c1 = 1.0 / (gamma * (2.0 - gamma));
  const double c0 = (1.0 - gamma) * (1.0 - gamma) / (gamma * (2.0 - gamma));
  return st.lu2->solve((c1 * mid - c0 * v).eval());
}

Eigen::VectorXd LinearPropagator::advance(Eigen::VectorXd v, double t, double dt_max) const {
  if (t < 0.0) throw NumericalError("semigroup action: t must be nonnegative on the full space");
  if (t == 0.0) return v;
  const int n = std::max(1, static_cast<int>(std::ceil(t / dt_max - 1e-12)));
  const double dt = t / n;
  for (int k = 0; k < n; ++k) v = step(v, dt);
  return v;
}

Eigen::VectorXd semigroup_action(const operators::EllipticOperator& op, const Eigen::VectorXd& v,
                                 double t, double dt) {
  LinearPropagator prop(op);
  return prop.advance(v, t, dt);
}

Eigen::VectorXd group_action_plus(const spectral::Projector& proj, const Eigen::VectorXd& coords,
                                  double t) {
  if (proj.d == 0) return Eigen::VectorXd(0);
  if (coords.size() != proj.d) throw NumericalError("group_action_plus: coordinate size mismatch");
  return smallmat::expm(proj.reduced * t) * coords;
}

namespace {

// Scan of the weighted curve e^{-alpha t}||S-(t)v|| on the dyadic dt ladder.
// The state is re-projected onto X- after every step: roundoff leaves a
// residue along X+ that the weight would otherwise amplify past the signal.
// early_exit_bound <= 0 disables the early exit; then the certificate
// (curve <= target * running max at t_max) is enforced.
double weighted_curve_max(const LinearPropagator& prop, const spectral::Projector& proj,
                          const Eigen::VectorXd& v, double alpha, double slow_rate, double t_max,
                          const NormOptions& opts, double early_exit_bound) {
  const geometry::GridSpec& grid = prop.op().mask.grid();
  double runmax = geometry::norm_l2(grid, v);
  if (runmax == 0.0) return 0.0;
  // The slowest surviving mode must stay inside TR-BDF2's overdamping range
  // (lambda*dt <= 2), otherwise the weight outruns the numerical decay.
  const double dt_cap = std::max(2.0 / std::max(slow_rate, 1e-6), opts.dt0);
  double t_cap = t_max;
  for (int doubling = 0; doubling <= opts.max_doublings; ++doubling) {
    Eigen::VectorXd cur = proj.project_minus(v);
    double t = 0.0, dt = opts.dt0, w = runmax;
    while (t < t_cap) {
      for (int s = 0; s < opts.steps_per_level && t < t_cap; ++s) {
        cur = proj.project_minus(dt > 4.0 * opts.dt0 ? prop.step_damped(cur, dt)
                                                     : prop.step(cur, dt));
        t += dt;
        w = std::exp(-alpha * t) * geometry::norm_l2(grid, cur);
        runmax = std::max(runmax, w);
        if (early_exit_bound > 0.0 && w <= opts.decay_target * runmax / early_exit_bound)
          return runmax;
      }
      dt = std::min(dt * 2.0, dt_cap);
    }
    if (w <= opts.decay_target * runmax) return runmax;
    t_cap *= 2.0;
  }
  throw NumericalError("renormed norm: truncation certificate failed after doubling t_max");
}

double plus_rate(const spectral::Projector& proj, double beta) {
  if (proj.d == 0) return 1.0;
  const Eigen::VectorXcd ev = proj.reduced.eigenvalues();
  double lam_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ev.size(); ++i) lam_min = std::min(lam_min, ev[i].real());
  return std::max(lam_min - beta, 1e-6);
}

}  // namespace

RenormEvaluator::RenormEvaluator(const LinearPropagator& prop, const spectral::Projector& proj,
                                 const DichotomyConstants& dc, const NormOptions& opts)
    : prop_(&prop), proj_(&proj), dc_(dc), opts_(opts) {
  const double minus_rate = std::max(dc_.stable_bound + dc_.alpha, 1e-6);
  t_max_minus_ = opts_.t_max > 0.0 ? opts_.t_max : std::log(1.0 / opts_.decay_target) / minus_rate;

  if (proj_->d > 0) {
    const double rate = plus_rate(*proj_, dc_.beta);
    const double t_span = std::log(1.0 / opts_.decay_target) / rate;
    plus_times_.push_back(0.0);
    plus_group_.push_back(Eigen::MatrixXd::Identity(proj_->d, proj_->d));
    double t = 0.0, dt = std::max(t_span / 256.0, 1e-4);
    while (t < t_span) {
      for (int s = 0; s < opts_.steps_per_level && t < t_span; ++s) {
        t += dt;
        plus_times_.push_back(-t);
        plus_group_.push_back(smallmat::expm(-t * proj_->reduced));
      }
      dt *= 2.0;
    }
  }
}

double RenormEvaluator::minus_norm(const Eigen::VectorXd& v) const {
  return weighted_curve_max(*prop_, *proj_, v, dc_.alpha, dc_.stable_bound, t_max_minus_, opts_,
                            std::max(dc_.M1, 1.0));
}

double RenormEvaluator::plus_norm_coords(const Eigen::VectorXd& coords) const {
  if (proj_->d == 0 || coords.size() == 0) return 0.0;
  double best = 0.0;
  for (std::size_t k = 0; k < plus_times_.size(); ++k) {
    const double w = std::exp(-dc_.beta * plus_times_[k]) * (plus_group_[k] * coords).norm();
    best = std::max(best, w);
  }
  return best;
}

double RenormEvaluator::plus_norm(const Eigen::VectorXd& w) const {
  return plus_norm_coords(proj_->coords(w));
}

DichotomyConstants choose_exponents(const spectral::Projector& proj,
                                    const spectral::SpectralSplit& split,
                                    const DichotomyCaps& caps) {
  if (!split.hyperbolic) throw NumericalError("fit_dichotomy: split must be hyperbolic");
  if (split.sigma_s.empty())
    throw NumericalError("fit_dichotomy: no computed stable eigenvalues to anchor sigma");

  double sigma_spec = -split.sigma_s.front().value.real();
  if (caps.stable_bound > 0.0) sigma_spec = std::min(sigma_spec, caps.stable_bound);
  if (!(sigma_spec > 0.0))
    throw NumericalError("fit_dichotomy: stable spectral bound is not negative");

  DichotomyConstants dc;
  dc.stable_bound = sigma_spec;
  if (proj.kind == spectral::SplitKind::Stable) {
    // X- = X^s: alpha = -sigma with sigma strictly inside the spectral gap,
    // beta at the midpoint of (-sigma, 0).
    dc.sigma_decay = 0.75 * sigma_spec;
    dc.alpha = -dc.sigma_decay;
    dc.beta = -dc.sigma_decay / 2.0;
  } else {
    // X- = X^cs: beta at the midpoint of (0, min Re sigma_u), alpha below it.
    dc.sigma_decay = sigma_spec;
    if (split.d > 0) {
      double lam_min_u = split.sigma_u.back().value.real();
      if (caps.unstable_min > 0.0) lam_min_u = std::min(lam_min_u, caps.unstable_min);
      if (!(lam_min_u > 0.0))
        throw NumericalError("fit_dichotomy: admissible interval for beta is empty");
      dc.beta = lam_min_u / 2.0;
    } else {
      dc.beta = sigma_spec;  // X+ trivial; any beta > alpha > 0 works
    }
    dc.alpha = dc.beta / 2.0;
  }
  return dc;
}

DichotomyConstants fit_prefactors(const LinearPropagator& prop, const spectral::Projector& proj,
                                  DichotomyConstants dc, const NormOptions& opts,
                                  std::uint64_t seed, int fit_samples) {
  const int n = prop.op().size();
  const geometry::GridSpec& grid = prop.op().mask.grid();
  const double minus_rate = std::max(dc.stable_bound + dc.alpha, 1e-6);
  const double t_max = opts.t_max > 0.0 ? opts.t_max
                                        : std::log(1.0 / opts.decay_target) / minus_rate;

  Rng rng(seed);
  double m1 = 1.0;
  for (int s = 0; s < fit_samples; ++s) {
    const Eigen::VectorXd v = proj.project_minus(rng.normal_vector(n));
    const double vn = geometry::norm_l2(grid, v);
    if (vn == 0.0) continue;
    m1 = std::max(m1, weighted_curve_max(prop, proj, v, dc.alpha, dc.stable_bound, t_max, opts,
                                         0.0) / vn);
  }
  dc.M1 = 1.1 * m1;

  double m2 = 1.0;
  if (proj.d > 0) {
    const double rate = plus_rate(proj, dc.beta);
    const double t_span = std::log(1.0 / opts.decay_target) / rate;
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> group;
    double t = 0.0, dt = std::max(t_span / 256.0, 1e-4);
    while (t < t_span) {
      for (int s = 0; s < opts.steps_per_level && t < t_span; ++s) {
        t += dt;
        times.push_back(-t);
        group.push_back(smallmat::expm(-t * proj.reduced));
      }
      dt *= 2.0;
    }
    for (int s = 0; s < fit_samples; ++s) {
      const Eigen::VectorXd c = rng.normal_vector(proj.d);
      const double cn = c.norm();  // basis columns are L2-orthonormal
      for (std::size_t k = 0; k < times.size(); ++k)
        m2 = std::max(m2, std::exp(-dc.beta * times[k]) * (group[k] * c).norm() / cn);
    }
  }
  dc.M2 = 1.1 * m2;
  return dc;
}

DichotomyConstants fit_dichotomy(const LinearPropagator& prop, const spectral::Projector& proj,
                                 const spectral::SpectralSplit& split, const NormOptions& opts,
                                 std::uint64_t seed, int fit_samples, const DichotomyCaps& caps) {
  return fit_prefactors(prop, proj, choose_exponents(proj, split, caps), opts, seed, fit_samples);
}

Semiflow::Semiflow(const operators::EllipticOperator& op, const CutoffNonlinearity& nl,
                   SemiflowConfig config)
    : op_(&op), nl_(&nl), config_(config) {
  if (!(config_.dt > 0.0)) throw ConfigError("time.dt must be positive");
  Eigen::SparseMatrix<double, Eigen::RowMajor> id(op.size(), op.size());
  id.setIdentity();
  rhs_ = id - (config_.dt / 2.0) * op.matrix;
  Eigen::SparseMatrix<double> lhs = id + (config_.dt / 2.0) * op.matrix;
  lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  lu_->compute(lhs);
  if (lu_->info() != Eigen::Success) throw NumericalError("semiflow: CN factorization failed");
}

Eigen::VectorXd Semiflow::step_once(const Eigen::VectorXd& u, Eigen::VectorXd& f_prev,
                                    bool first) const {
  const double dt = config_.dt;
  const Eigen::VectorXd f = modified_f(*nl_, op_->mask, u);
  Eigen::VectorXd rhs(u.size());
  kernels::spmv(rhs_, {u.data(), static_cast<std::size_t>(u.size())},
                {rhs.data(), static_cast<std::size_t>(rhs.size())});
  if (config_.scheme == Scheme::CnAb && !first)
    rhs += dt * (1.5 * f - 0.5 * f_prev);
  else
    rhs += dt * f;
  f_prev = f;
  return lu_->solve(rhs);
}

Trajectory Semiflow::run(const Eigen::VectorXd& u0, double t, bool keep_samples) const {
  if (t < 0.0) throw NumericalError("semiflow: t must be nonnegative");
  const double dt = config_.dt;
  const int steps = static_cast<int>(std::floor(t / dt + 1e-9));
  const double rem = t - steps * dt;

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(u0);

  Eigen::VectorXd u = u0;
  Eigen::VectorXd f_prev;
  const DomainMask& mask = op_->mask;
  for (int k = 0; k < steps; ++k) {
    u = step_once(u, f_prev, k == 0);
    if ((k % 16 == 15 || k + 1 == steps) && !u.allFinite())
      throw NumericalError("semiflow diverged (non-finite state); reduce dt or delta");
    const double tk = (k + 1) * dt;
    if (keep_samples && ((k + 1) % std::max(1, config_.sample_stride) == 0) && !(rem <= 1e-12 && k + 1 == steps)) {
      traj.times.push_back(tk);
      traj.states.push_back(u);
    }
  }
  if (rem > 1e-12) {
    // one trailing step of size rem via a throwaway factorization
    Eigen::SparseMatrix<double, Eigen::RowMajor> id(op_->size(), op_->size());
    id.setIdentity();
    const Eigen::SparseMatrix<double, Eigen::RowMajor> rrem = id - (rem / 2.0) * op_->matrix;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(Eigen::SparseMatrix<double>(id + (rem / 2.0) * op_->matrix));
    if (lu.info() != Eigen::Success) throw NumericalError("semiflow: trailing step factorization failed");
    const Eigen::VectorXd f = modified_f(*nl_, mask, u);
    Eigen::VectorXd rhs(u.size());
    kernels::spmv(rrem, {u.data(), static_cast<std::size_t>(u.size())},
                  {rhs.data(), static_cast<std::size_t>(rhs.size())});
    rhs += rem * f;
    u = lu.solve(rhs);
  }
  traj.times.push_back(t);
  traj.states.push_back(std::move(u));
  return traj;
}

Semiflow::WhileResult Semiflow::run_while(
    const Eigen::VectorXd& u0, double t, int stride,
    const std::function<double(double, const Eigen::VectorXd&)>& violation_of) const {
  if (t < 0.0) throw NumericalError("semiflow: t must be nonnegative");
  stride = std::max(1, stride);
  const double dt = config_.dt;
  const int steps = static_cast<int>(std::llround(t / dt));

  WhileResult out;
  double ratio = violation_of(0.0, u0);
  if (ratio > 1.0 + 1e-9) {
    out.kept_time = -1.0;  // violated already at the start
    out.violation = ratio;
    return out;
  }
  out.kept_time = 0.0;

  Eigen::VectorXd u = u0;
  Eigen::VectorXd f_prev;
  for (int k = 0; k < steps; ++k) {
    u = step_once(u, f_prev, k == 0);
    if ((k + 1) % stride == 0 || k + 1 == steps) {
      if (!u.allFinite())
        throw NumericalError("semiflow diverged (non-finite state); reduce dt or delta");
      const double tk = (k + 1) * dt;
      ratio = violation_of(tk, u);
      if (ratio > 1.0 + 1e-9) {
        out.violation = ratio;
        return out;
      }
      out.kept_time = tk;
    }
  }
  return out;
}

Eigen::VectorXd Semiflow::flow(const Eigen::VectorXd& u0, double t) const {
  return run(u0, t, false).states.back();
}

Trajectory Semiflow::evolve(const Eigen::VectorXd& u0, double t) const {
  return run(u0, t, true);
}

Trajectory evolve(const SemiflowConfig& config, const operators::EllipticOperator& op,
                  const CutoffNonlinearity& nl, const Eigen::VectorXd& u0, double t) {
  return Semiflow(op, nl, config).evolve(u0, t);
}

}  // namespace mperturb::dynamics
