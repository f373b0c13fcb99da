#include "mperturb/instance.hpp"

#include <algorithm>
#include <cmath>

namespace mperturb {

operators::CoefficientField build_coefficients(const ProblemConfig& cfg) {
  using operators::CoefficientField;
  const geometry::GridSpec& g = cfg.grid;
  CoefficientField c = CoefficientField::constant(g, cfg.a11, cfg.a22, cfg.a12, cfg.drift_a1,
                                                  cfg.drift_a2, cfg.adv_b1, cfg.adv_b2, cfg.c0);
  if (cfg.coeff_preset == "constant") return c;

  if (cfg.coeff_preset == "affine") {
    for (int j = 1; j <= g.m; ++j)
      for (int i = 1; i <= g.m; ++i) {
        const int p = g.index(i, j);
        const double sx = (g.x(i) - g.x0) / g.side, sy = (g.y(j) - g.y0) / g.side;
        const double mod = cfg.coeff_grad_x * sx + cfg.coeff_grad_y * sy;
        c.a11[p] += mod;
        c.a22[p] += mod;
        c.c0[p] += mod;
      }
    return c;
  }
  if (cfg.coeff_preset == "trigonometric") {
    const double amp = cfg.coeff_trig_amp;
    for (int j = 1; j <= g.m; ++j)
      for (int i = 1; i <= g.m; ++i) {
        const int p = g.index(i, j);
        const double sx = (g.x(i) - g.x0) / g.side, sy = (g.y(j) - g.y0) / g.side;
        c.a11[p] += amp * std::sin(2.0 * M_PI * sx) * std::sin(2.0 * M_PI * sy);
        c.a22[p] += amp * std::cos(2.0 * M_PI * sx) * std::sin(M_PI * sy);
        c.b1[p] += amp * std::sin(M_PI * sx);
        c.c0[p] += amp * std::cos(2.0 * M_PI * sy);
      }
    return c;
  }
  throw ConfigError("unknown coefficient preset '" + cfg.coeff_preset + "'");
}

namespace {

void wire_context(Instance& ins, const ProblemConfig& cfg) {
  manifolds::ManifoldContext& ctx = ins.ctx;
  ctx.op = &ins.op;
  ctx.proj = &ins.proj;
  ctx.nl = &ins.nl;
  ctx.prop = ins.prop.get();
  ctx.renorm = ins.renorm.get();
  ctx.flow = ins.flow.get();
  ctx.dc = ins.dc;
  ctx.cone = ins.cone;
  ctx.sched = ins.sched;
  ctx.mesh_points = cfg.mesh_points;
  ctx.sample_refine = cfg.sample_refine;
  ctx.cone_stride = cfg.cone_stride;
  ctx.shoot_tol = cfg.shoot_tol;
  ctx.stable_directions = cfg.stable_directions;
  ctx.stable_radii = cfg.stable_radii;
  ctx.seed = cfg.seed;
}

double snapped_dt(double dt, double t_map) {
  if (t_map <= 0.0) return dt;
  const int n = std::max(1, static_cast<int>(std::llround(t_map / dt)));
  return t_map / n;
}

// The cone-exit window around h-(v0) shrinks like e^{-(lambda_u + sigma_s) t};
// the horizon must leave it wide enough for the shooting search to resolve,
// so 10/sigma is capped by 6.5 window-shrink times.
double default_t_stab(const dynamics::DichotomyConstants& dc,
                      const spectral::SpectralSplit& split) {
  const double base = 10.0 / std::max(dc.sigma_decay, 1e-6);
  if (split.d == 0) return base;
  const double shrink = dc.stable_bound + split.sigma_u.back().value.real();
  return std::min(base, 6.5 / std::max(shrink, 1e-6));
}

}  // namespace

std::unique_ptr<Instance> build_instance(const ProblemConfig& cfg,
                                         const geometry::DomainMask& mask) {
  const operators::CoefficientField coeffs = build_coefficients(cfg);
  if (!operators::check_ellipticity(coeffs, cfg.alpha0))
    throw ConfigError("coefficients fail the ellipticity check for alpha0 = " +
                      std::to_string(cfg.alpha0));

  // cutoff measurement (and the epsilon < eta/4 gate) before any eigen-solve
  const dynamics::CutoffNonlinearity nl = dynamics::make_cutoff(
      mask, cfg.nonlin, cfg.amplitude, cfg.delta, cfg.eta, cfg.lipschitz_samples, cfg.seed);

  auto ins = std::make_unique<Instance>(mask, operators::assemble(mask, coeffs, cfg.alpha0));
  ins->nl = nl;

  spectral::EigOptions eopts;
  eopts.seed = cfg.seed;
  ins->split = spectral::analyze(ins->op, eopts, cfg.eig_k0);
  if (!ins->split.hyperbolic)
    throw NumericalError("equilibrium is not hyperbolic on mask '" + mask.label() +
                         "' (eigenvalue within tau_c of the imaginary axis)");
  ins->proj = spectral::build_projector(ins->op, ins->split, cfg.split, cfg.seed + 1);

  ins->prop = std::make_unique<dynamics::LinearPropagator>(ins->op);
  ins->dc = dynamics::fit_dichotomy(*ins->prop, ins->proj, ins->split, cfg.norm_opts,
                                    cfg.seed + 2, cfg.fit_samples, cfg.caps);
  ins->renorm = std::make_unique<dynamics::RenormEvaluator>(*ins->prop, ins->proj, ins->dc,
                                                            cfg.norm_opts);

  ins->cone = manifolds::select_cone_params(ins->dc, ins->nl.epsilon);
  manifolds::require_feasible(ins->cone);
  ins->sched = manifolds::make_schedule(ins->dc, ins->cone, cfg.t_map, cfg.tol, cfg.m_max);

  double dt = cfg.dt > 0.0 ? cfg.dt : dynamics::default_dt(ins->split);
  dt = snapped_dt(dt, ins->sched.t_map);
  ins->flow = std::make_unique<dynamics::Semiflow>(
      ins->op, ins->nl, dynamics::SemiflowConfig{cfg.scheme, dt, cfg.t_horizon, 8});

  wire_context(*ins, cfg);
  manifolds::ManifoldContext& ctx = ins->ctx;
  ctx.r_mesh = cfg.r_mesh > 0.0 ? cfg.r_mesh : 0.45 * cfg.delta;
  if (cfg.delta1 > 0.0 && cfg.delta2 > 0.0) {
    ctx.delta1 = cfg.delta1;
    ctx.delta2 = cfg.delta2;
  } else if (cfg.split == spectral::SplitKind::Unstable) {
    ctx.delta2 = ctx.r_mesh;
    ctx.delta1 = 2.0 * ctx.r_mesh;  // delta1 > delta2
  } else {
    ctx.delta1 = ctx.r_mesh;
    ctx.delta2 = 2.0 * ctx.r_mesh;  // delta1 < delta2
  }
  if (cfg.delta_hat > 0.0) {
    ctx.delta_hat = cfg.delta_hat;
  } else {
    const double from_minus = ctx.delta1 / (ins->dc.M1 * std::max(ins->proj.norm_minus, 1e-12));
    const double from_plus = ins->proj.d > 0
                                 ? ctx.delta2 / (ins->dc.M2 * std::max(ins->proj.norm_plus, 1e-12))
                                 : from_minus;
    ctx.delta_hat = 0.9 * std::min({from_minus, from_plus, cfg.delta});
  }
  ctx.t_stab = cfg.t_stab > 0.0 ? cfg.t_stab : default_t_stab(ins->dc, ins->split);
  return ins;
}

std::unique_ptr<Instance> build_member_instance(const ProblemConfig& cfg,
                                                const geometry::DomainMask& mask,
                                                const Instance& limit) {
  const operators::CoefficientField coeffs = build_coefficients(cfg);
  auto ins = std::make_unique<Instance>(mask, operators::assemble(mask, coeffs, cfg.alpha0));

  // uniform nonlinearity: same cutoff radius and measured constants as the limit
  ins->nl = limit.nl;

  spectral::EigOptions eopts;
  eopts.seed = cfg.seed;
  ins->split = spectral::analyze(ins->op, eopts, cfg.eig_k0);
  if (!ins->split.hyperbolic)
    throw NumericalError("member '" + mask.label() + "' rejected: not hyperbolic");
  if (ins->split.d != limit.split.d)
    throw NumericalError("member '" + mask.label() + "' rejected: dim X^u = " +
                         std::to_string(ins->split.d) + " does not match the limit (" +
                         std::to_string(limit.split.d) + ")");
  ins->proj = spectral::build_projector(ins->op, ins->split, limit.proj.kind, cfg.seed + 1);

  ins->prop = std::make_unique<dynamics::LinearPropagator>(ins->op);

  // uniform exponents alpha, beta from the limit; member-fitted prefactors
  dynamics::DichotomyConstants dc = limit.dc;
  dc.stable_bound = std::min(limit.dc.stable_bound, -ins->split.sigma_s.front().value.real());
  ins->dc = dynamics::fit_prefactors(*ins->prop, ins->proj, dc, cfg.norm_opts, cfg.seed + 2,
                                     cfg.fit_samples);
  ins->renorm = std::make_unique<dynamics::RenormEvaluator>(*ins->prop, ins->proj, ins->dc,
                                                            cfg.norm_opts);

  // uniform gamma, mu, nu, epsilon and iteration schedule
  ins->cone = limit.cone;
  ins->sched = limit.sched;

  ins->flow = std::make_unique<dynamics::Semiflow>(
      ins->op, ins->nl,
      dynamics::SemiflowConfig{cfg.scheme, limit.flow->config().dt, cfg.t_horizon, 8});

  wire_context(*ins, cfg);
  ins->ctx.r_mesh = limit.ctx.r_mesh;
  ins->ctx.delta1 = limit.ctx.delta1;
  ins->ctx.delta2 = limit.ctx.delta2;
  ins->ctx.delta_hat = limit.ctx.delta_hat;
  ins->ctx.t_stab = limit.ctx.t_stab;
  return ins;
}

}  // namespace mperturb
