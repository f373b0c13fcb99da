#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>

#include "mperturb/kernels.hpp"
#include "mperturb/lab.hpp"
#include "mperturb/rng.hpp"
#include "mperturb/smallmat.hpp"

// The `validate` subcommand: a deterministic suite of the structural
// invariants, run at small grid sizes so the whole thing stays fast. One
// line per check on stdout and in validate_report.csv; nonzero failures
// map to exit code 4.

namespace mperturb::lab {

namespace {

struct Suite {
  struct Row {
    std::string name;
    bool pass;
    double value;
    double threshold;
    std::string note;
  };
  std::vector<Row> rows;
  bool quiet = false;

  void add(const std::string& name, bool pass, double value, double threshold,
           std::string note = "") {
    rows.push_back({name, pass, value, threshold, std::move(note)});
    if (quiet && pass) return;
    std::cout << (pass ? "  ok  " : " FAIL ") << name << "  (value " << fmt(value)
              << ", threshold " << fmt(threshold) << ")" << (pass ? "" : "  " + rows.back().note)
              << "\n";
  }

  void guard(const std::string& name, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      add(name, false, 0.0, 0.0, e.what());
    }
  }
};

ProblemConfig small_problem(std::uint64_t seed, int m = 21) {
  ProblemConfig p;
  p.grid = geometry::make_grid(m);
  p.c0 = -30.0;
  p.nonlin = dynamics::NonlinPreset::Cubic;
  p.amplitude = 1.0;
  p.delta = 0.01;
  p.mesh_points = 13;
  p.sample_refine = 2;
  p.stable_directions = 4;
  p.stable_radii = 2;
  p.fit_samples = 40;
  p.lipschitz_samples = 18;
  p.seed = seed;
  return p;
}

void check_geometry(Suite& s, std::uint64_t seed) {
  const geometry::GridSpec grid = geometry::make_grid(31);
  const geometry::DomainFamily fam = geometry::build_family(geometry::FamilyKind::Dumbbell, 4, grid);
  Rng rng(seed);

  double worst_rt = 0.0, worst_iso = 0.0;
  for (const geometry::DomainMask& m : fam.members) {
    const Eigen::VectorXd u = rng.normal_vector(m.active_count());
    const Eigen::VectorXd full = geometry::extend_by_zero(u, m);
    worst_rt = std::max(worst_rt, (geometry::restrict_to(full, m) - u).cwiseAbs().maxCoeff());
    worst_iso = std::max(worst_iso, std::abs(geometry::norm_l2(grid, full) -
                                             geometry::norm_l2(grid, u)));
  }
  s.add("geometry/extend_restrict_roundtrip", worst_rt == 0.0, worst_rt, 0.0);
  s.add("geometry/extension_isometry", worst_iso == 0.0, worst_iso, 0.0);

  bool nested = true, decreasing = true;
  for (int n = 0; n + 1 < fam.n_max(); ++n) {
    nested &= fam.members[static_cast<std::size_t>(n + 1)].subset_of(
        fam.members[static_cast<std::size_t>(n)]);
    decreasing &= fam.members[static_cast<std::size_t>(n + 1)].measure() <
                  fam.members[static_cast<std::size_t>(n)].measure();
  }
  s.add("geometry/dumbbell_nested_decreasing", nested && decreasing, nested && decreasing ? 1 : 0,
        1);

  const geometry::DomainFamily fing = geometry::build_family(geometry::FamilyKind::Fingers, 3, grid);
  double gap0 = fing.members[0].measure() - fing.limit().measure();
  double worst_gap = 0.0;
  for (const geometry::DomainMask& m : fing.members)
    worst_gap = std::max(worst_gap, std::abs(m.measure() - fing.limit().measure() - gap0));
  s.add("geometry/fingers_constant_added_measure", worst_gap < 1e-15, worst_gap, 1e-15);
}

void check_operators(Suite& s, std::uint64_t seed) {
  // exact 5-point stencil on the full grid
  {
    const geometry::GridSpec grid = geometry::make_grid(5);
    const geometry::DomainMask mask = geometry::full_mask(grid);
    const auto coeffs = operators::CoefficientField::constant(grid);
    const operators::EllipticOperator op = operators::assemble(mask, coeffs, 1.0);
    const double ih2 = 1.0 / grid.cell_area();
    const int center = mask.local_of_full(grid.index(3, 3));
    double worst = std::abs(op.matrix.coeff(center, center) - 4.0 * ih2);
    worst = std::max(worst, std::abs(op.matrix.coeff(center, center - 1) + ih2));
    worst = std::max(worst, std::abs(op.matrix.coeff(center, center + 1) + ih2));
    s.add("operators/laplacian_stencil_exact", worst == 0.0, worst, 0.0);
  }

  const geometry::GridSpec grid = geometry::make_grid(31);
  const geometry::DomainMask mask = geometry::full_mask(grid);
  Rng rng(seed + 1);

  ProblemConfig presets[3];
  presets[0].coeff_preset = "constant";
  presets[1].coeff_preset = "constant";
  presets[1].a11 = 2.0;
  presets[1].a22 = 1.5;
  presets[1].a12 = 0.3;
  presets[1].drift_a1 = 0.4;
  presets[1].adv_b1 = 0.6;
  presets[1].c0 = -30.0;
  presets[2].coeff_preset = "trigonometric";
  presets[2].a11 = 1.5;
  presets[2].a22 = 1.3;
  presets[2].coeff_trig_amp = 0.25;
  presets[2].adv_b2 = 0.5;
  presets[2].c0 = -5.0;
  const char* names[3] = {"constant", "drift", "trigonometric"};
  for (int k = 0; k < 3; ++k) {
    presets[k].grid = grid;
    const auto coeffs = build_coefficients(presets[k]);
    const operators::EllipticOperator op = operators::assemble(mask, coeffs, presets[k].alpha0);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 200; ++t) {
      const Eigen::VectorXd u = rng.normal_vector(op.size());
      const double lhs = operators::form_value(op, u, u) +
                         op.lambda0 * std::pow(geometry::norm_l2(grid, u), 2);
      const double rhs = 0.5 * op.alpha0 * operators::h1_norm_sq(mask, u);
      min_slack = std::min(min_slack, lhs - rhs);
    }
    s.add(std::string("operators/garding_") + names[k], min_slack >= 0.0, min_slack, 0.0);
  }

  // pure-diffusion assembly is symmetric to machine precision
  {
    ProblemConfig p = presets[2];
    p.adv_b2 = 0.0;
    p.coeff_preset = "trigonometric";
    const auto coeffs = build_coefficients(p);
    auto c2 = coeffs;
    c2.b1.setZero();
    c2.b2.setZero();
    c2.a1.setZero();
    c2.a2.setZero();
    const operators::EllipticOperator op = operators::assemble(mask, c2, p.alpha0);
    const double asym = spectral::is_symmetric(op.matrix, 1e-14) ? 0.0 : 1.0;
    s.add("operators/pure_diffusion_symmetric", asym == 0.0, asym, 0.0);
  }
}

void check_spectral(Suite& s, std::uint64_t seed) {
  const geometry::GridSpec grid = geometry::make_grid(21);
  const geometry::DomainMask mask = geometry::full_mask(grid);
  spectral::EigOptions eopts;
  eopts.seed = seed + 2;

  // Dirichlet Laplacian oracle: pi^2 (j^2 + k^2)
  {
    const auto coeffs = operators::CoefficientField::constant(grid);
    const operators::EllipticOperator op = operators::assemble(mask, coeffs, 1.0);
    const auto eigs = spectral::rightmost_eigs(op, 3, std::nan(""), eopts);
    const double pi2 = M_PI * M_PI;
    const double expect[3] = {-2 * pi2, -5 * pi2, -5 * pi2};
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
      worst = std::max(worst, std::abs(eigs[static_cast<std::size_t>(i)].value.real() - expect[i]) /
                                  std::abs(expect[i]));
    s.add("spectral/laplacian_eigenvalue_oracle", worst < 0.01, worst, 0.01);
  }

  // shifted operator: projector residuals, self-adjoint norm
  {
    const auto coeffs = operators::CoefficientField::constant(grid, 1, 1, 0, 0, 0, 0, 0, -30.0);
    const operators::EllipticOperator op = operators::assemble(mask, coeffs, 1.0);
    const spectral::SpectralSplit split = spectral::analyze(op, eopts);
    const spectral::Projector proj =
        spectral::build_projector(op, split, spectral::SplitKind::Unstable, seed + 3);
    s.add("spectral/unstable_dimension", split.d == 1, split.d, 1);
    s.add("spectral/projector_idempotent", proj.idem_residual <= 1e-6, proj.idem_residual, 1e-6);
    s.add("spectral/projector_commutes", proj.commute_residual <= 1e-6, proj.commute_residual,
          1e-6);
    s.add("spectral/selfadjoint_projector_norm", std::abs(proj.norm_plus - 1.0) < 1e-8,
          proj.norm_plus, 1.0);
  }
}

void check_dynamics(Suite& s, std::uint64_t seed) {
  // cutoff branch values
  {
    const double d = 0.7;
    const double worst = std::max({std::abs(dynamics::cutoff_factor(0.5 * d, d) - 1.0),
                                   std::abs(dynamics::cutoff_factor(1.5 * d, d) - 0.5),
                                   std::abs(dynamics::cutoff_factor(3.0 * d, d))});
    s.add("dynamics/cutoff_branches", worst <= 1e-15, worst, 1e-15);
  }

  ProblemConfig p = small_problem(seed + 4);
  const geometry::DomainMask mask = geometry::full_mask(p.grid);
  const auto nl = dynamics::make_cutoff(mask, p.nonlin, p.amplitude, p.delta, 0.0,
                                        p.lipschitz_samples, p.seed);

  // modification agrees with the raw field inside the ball
  {
    Rng rng(seed + 5);
    Eigen::VectorXd u = rng.normal_vector(mask.active_count());
    u *= 0.5 * p.delta / geometry::norm_l2(p.grid, u);
    const double diff = geometry::norm_l2(
        p.grid, dynamics::modified_f(nl, mask, u) - dynamics::raw_f(nl, mask, u));
    s.add("dynamics/modification_is_local", diff == 0.0, diff, 0.0);
  }

  // monotone epsilon in the radius, zero preset gives zero
  {
    const double e1 = dynamics::estimate_lipschitz(nl, mask, 1.0 * p.delta, 12, seed + 6);
    const double e2 = dynamics::estimate_lipschitz(nl, mask, 2.0 * p.delta, 12, seed + 6);
    s.add("dynamics/lipschitz_monotone_in_radius", e2 >= e1, e2 - e1, 0.0);
    dynamics::CutoffNonlinearity z = nl;
    z.preset = dynamics::NonlinPreset::Zero;
    const double ez = dynamics::estimate_lipschitz(z, mask, p.delta, 6, seed + 7);
    s.add("dynamics/lipschitz_zero_preset", ez == 0.0, ez, 0.0);
  }

  const std::unique_ptr<Instance> ins = build_instance(p, mask);

  // norm sandwiches on both sides
  {
    Rng rng(seed + 8);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd v = ins->proj.project_minus(rng.normal_vector(ins->op.size()));
      const double l2 = geometry::norm_l2(p.grid, v);
      if (l2 == 0.0) continue;
      const double xm = ins->renorm->minus_norm(v);
      worst = std::max({worst, (l2 - xm) / l2, (xm - ins->dc.M1 * l2) / l2});
    }
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd c = Rng(seed + 9 + k).normal_vector(ins->proj.d);
      const double l2 = c.norm();
      const double xp = ins->renorm->plus_norm_coords(c);
      worst = std::max({worst, (l2 - xp) / l2, (xp - ins->dc.M2 * l2) / l2});
    }
    s.add("dynamics/norm_sandwiches", worst <= 1e-9, worst, 1e-9);
  }

  // CN-AB second order, exp-Euler first order (self-convergence on a
  // source-dominated state scale)
  {
    const auto nl_big = dynamics::make_cutoff(mask, dynamics::NonlinPreset::Cubic, 10.0, 1.0,
                                              0.0, 6, seed + 10);
    Rng rng(seed + 10);
    Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
    u0 *= 0.8 / geometry::norm_l2(p.grid, u0);
    const double t = 0.1;
    auto err_at = [&](dynamics::Scheme scheme, double dt) {
      const dynamics::SemiflowConfig c1{scheme, dt, 1 << 20};
      const dynamics::SemiflowConfig cref{scheme, dt / 4, 1 << 20};
      const Eigen::VectorXd a = dynamics::Semiflow(ins->op, nl_big, c1).flow(u0, t);
      const Eigen::VectorXd b = dynamics::Semiflow(ins->op, nl_big, cref).flow(u0, t);
      return geometry::norm_l2(p.grid, a - b);
    };
    const double c1 = err_at(dynamics::Scheme::CnAb, 2e-3) / err_at(dynamics::Scheme::CnAb, 1e-3);
    s.add("dynamics/cnab_selfconvergence_ratio", c1 > 3.2 && c1 < 4.8, c1, 4.0);
    const double c2 =
        err_at(dynamics::Scheme::ExpEuler, 2e-3) / err_at(dynamics::Scheme::ExpEuler, 1e-3);
    s.add("dynamics/exp_euler_selfconvergence_ratio", c2 > 1.5 && c2 < 2.9, c2, 2.0);
  }

  // semigroup composition
  {
    Rng rng(seed + 11);
    Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
    u0 *= 0.5 * p.delta / geometry::norm_l2(p.grid, u0);
    const Eigen::VectorXd once = ins->flow->flow(u0, 0.2);
    const Eigen::VectorXd twice = ins->flow->flow(ins->flow->flow(u0, 0.1), 0.1);
    const double scheme_tol = 10.0 * ins->flow->config().dt * ins->flow->config().dt * 100.0;
    const double diff = geometry::norm_l2(p.grid, once - twice);
    s.add("dynamics/semiflow_composition", diff <= 10.0 * scheme_tol + 1e-12, diff,
          10.0 * scheme_tol);
  }
}

void check_manifolds(Suite& s, std::uint64_t seed) {
  // worked cone-parameter example
  {
    dynamics::DichotomyConstants dc;
    dc.alpha = 0.5;
    dc.beta = 1.0;
    const manifolds::ConeParams cone = manifolds::select_cone_params(dc, 0.05);
    const bool ok = cone.feasible && cone.mu == 0.5 && cone.nu == 2.0 &&
                    std::abs(cone.gamma + 0.75) < 1e-12;
    s.add("manifolds/cone_params_example", ok, cone.gamma, -0.75);
    const manifolds::ConeParams bad = manifolds::select_cone_params(dc, 0.2);
    s.add("manifolds/cone_params_infeasible_detected", !bad.feasible, bad.feasible ? 1 : 0, 0);
  }

  // linear problem: both manifolds are exactly flat
  {
    ProblemConfig p = small_problem(seed + 12);
    p.nonlin = dynamics::NonlinPreset::Zero;
    const geometry::DomainMask mask = geometry::full_mask(p.grid);
    {
      ProblemConfig pu = p;
      pu.split = spectral::SplitKind::Unstable;
      const std::unique_ptr<Instance> ins = build_instance(pu, mask);
      const manifolds::ManifoldPatch patch = manifolds::unstable_manifold(ins->ctx);
      s.add("manifolds/linear_unstable_flat", patch.lip <= 1e-8, patch.lip, 1e-8);
    }
    {
      ProblemConfig ps = p;
      ps.split = spectral::SplitKind::Stable;
      const std::unique_ptr<Instance> ins = build_instance(ps, mask);
      const manifolds::ManifoldPatch patch = manifolds::stable_manifold(ins->ctx);
      double worst = 0.0;
      for (const auto& sample : patch.samples)
        if (sample.coords.size() > 0)
          worst = std::max(worst,
                           geometry::norm_l2(p.grid, ins->proj.embed(sample.coords)));
      s.add("manifolds/linear_stable_flat", worst <= 1e-8, worst, 1e-8);
    }
  }

  // cubic problem: contraction ratios against K
  {
    ProblemConfig p = small_problem(seed + 13);
    p.split = spectral::SplitKind::Unstable;
    const geometry::DomainMask mask = geometry::full_mask(p.grid);
    const std::unique_ptr<Instance> ins = build_instance(p, mask);
    const manifolds::ManifoldPatch patch = manifolds::unstable_manifold(ins->ctx);
    double worst = 0.0;
    for (double r : patch.contraction_ratios) worst = std::max(worst, r);
    s.add("manifolds/contraction_ratio_bound", worst <= 1.1 * ins->sched.K, worst,
          1.1 * ins->sched.K);
    s.add("manifolds/iterations_within_m0", patch.iterations <= patch.m0 + 3,
          patch.iterations, patch.m0 + 3);
  }
}

void check_perturbation(Suite& s, std::uint64_t) {
  // exhaustive max-min oracle on hand-placed points
  auto vec = [](double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
  };
  const std::vector<Eigen::VectorXd> a{vec(0, 0), vec(1, 0), vec(0, 2)};
  const std::vector<Eigen::VectorXd> b{vec(0, 0), vec(0.5, 0)};
  // distances from a to b: 0, 0.5, 2; from b to a: 0, 0.5
  const double upper = perturbation::upper_semidistance(a, b, 1.0);
  const double lower = perturbation::lower_semidistance(b, a, 1.0);
  const double expect_upper = 2.0;
  s.add("perturbation/semidistance_oracle_upper", std::abs(upper - expect_upper) < 1e-15, upper,
        expect_upper);
  s.add("perturbation/semidistance_oracle_lower", std::abs(lower - 0.5) < 1e-15, lower, 0.5);
  s.add("perturbation/semidistance_self_zero",
        perturbation::upper_semidistance(a, a, 1.0) == 0.0, 0.0, 0.0);
}

void check_determinism(Suite& s, std::uint64_t seed) {
  ProblemConfig p = small_problem(seed + 14);
  const geometry::DomainMask mask = geometry::full_mask(p.grid);
  const std::unique_ptr<Instance> a = build_instance(p, mask);
  const std::unique_ptr<Instance> b = build_instance(p, mask);
  const bool same = a->split.sigma_u.front().value == b->split.sigma_u.front().value &&
                    a->dc.M1 == b->dc.M1 && a->nl.epsilon == b->nl.epsilon &&
                    a->sched.K == b->sched.K;
  s.add("lab/instance_determinism", same, same ? 1 : 0, 1);
}

}  // namespace

ValidateOutcome cmd_validate(const ExperimentConfig& cfg, const RunPaths& run, bool quiet) {
  const std::uint64_t seed = cfg.problem.seed;
  Suite s;
  s.quiet = quiet;
  s.guard("geometry", [&] { check_geometry(s, seed); });
  s.guard("operators", [&] { check_operators(s, seed); });
  s.guard("spectral", [&] { check_spectral(s, seed); });
  s.guard("dynamics", [&] { check_dynamics(s, seed); });
  s.guard("manifolds", [&] { check_manifolds(s, seed); });
  s.guard("perturbation", [&] { check_perturbation(s, seed); });
  s.guard("lab", [&] { check_determinism(s, seed); });

  std::ofstream out(run.file("validate_report.csv"), std::ios::binary);
  out << "check,pass,value,threshold,note\n";
  ValidateOutcome outcome;
  for (const auto& row : s.rows) {
    std::string note = row.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out << row.name << "," << (row.pass ? 1 : 0) << "," << fmt(row.value) << ","
        << fmt(row.threshold) << "," << note << "\n";
    ++outcome.total;
    if (!row.pass) ++outcome.failures;
  }
  return outcome;
}

}  // namespace mperturb::lab
