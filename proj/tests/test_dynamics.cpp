#include <doctest.h>

#include <cmath>

#include "mperturb/dynamics.hpp"
#include "mperturb/instance.hpp"
#include "mperturb/rng.hpp"

using namespace mperturb;
using namespace mperturb::dynamics;
using geometry::full_mask;
using geometry::make_grid;
using geometry::norm_l2;

namespace {

ProblemConfig shifted_problem(int m, double c0 = -30.0) {
  ProblemConfig p;
  p.grid = make_grid(m);
  p.c0 = c0;
  p.delta = 0.01;
  p.mesh_points = 13;
  p.fit_samples = 30;
  p.lipschitz_samples = 15;
  p.stable_directions = 4;
  return p;
}

Eigen::VectorXd sine_mode(const geometry::DomainMask& mask, int kx, int ky) {
  const geometry::GridSpec& g = mask.grid();
  Eigen::VectorXd u(mask.active_count());
  for (int k = 0; k < mask.active_count(); ++k) {
    const int p = mask.full_of_local(k);
    u[k] = std::sin(kx * M_PI * g.x(p % g.m + 1)) * std::sin(ky * M_PI * g.y(p / g.m + 1));
  }
  return u;
}

}  // namespace

TEST_CASE("cutoff factor branch values") {
  const double d = 0.37;
  CHECK(cutoff_factor(0.5 * d, d) == 1.0);
  CHECK(cutoff_factor(1.5 * d, d) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cutoff_factor(3.0 * d, d) == 0.0);
  CHECK(cutoff_factor(0.0, d) == 1.0);
  CHECK_THROWS_AS((void)cutoff_factor(1.0, 0.0), NumericalError);
}

TEST_CASE("modified field: zero at zero, killed beyond 2 delta, cubic nodewise") {
  const geometry::DomainMask mask = full_mask(make_grid(15));
  CutoffNonlinearity nl;
  nl.preset = NonlinPreset::Cubic;
  nl.amplitude = 2.0;
  nl.delta = 0.05;

  CHECK(modified_f(nl, mask, Eigen::VectorXd::Zero(mask.active_count())).norm() == 0.0);

  Rng rng(1);
  Eigen::VectorXd big = rng.normal_vector(mask.active_count());
  big *= 3.0 * nl.delta / norm_l2(mask.grid(), big);
  CHECK(modified_f(nl, mask, big).norm() == 0.0);

  Eigen::VectorXd small = rng.normal_vector(mask.active_count());
  small *= 0.5 * nl.delta / norm_l2(mask.grid(), small);
  const Eigen::VectorXd f = modified_f(nl, mask, small);
  for (int k = 0; k < small.size(); ++k)
    CHECK(f[k] == doctest::Approx(2.0 * std::pow(small[k], 3)).epsilon(1e-14));
  CHECK(f == raw_f(nl, mask, small));  // Psi = 1 inside the ball
}

TEST_CASE("sampled Lipschitz constant: zero preset, cubic scaling, monotonicity") {
  const geometry::DomainMask mask = full_mask(make_grid(15));
  CutoffNonlinearity zero;
  zero.preset = NonlinPreset::Zero;
  zero.delta = 0.05;
  CHECK(estimate_lipschitz(zero, mask, 0.05, 9, 7) == 0.0);

  CutoffNonlinearity cubic;
  cubic.preset = NonlinPreset::Cubic;
  cubic.amplitude = 1.0;
  cubic.delta = 1e9;  // effectively no cutoff: pure scaling of the raw cubic
  // analytic oracle: the cubic ratio scales like radius^2, so halving the
  // radius cuts the estimate by ~4 (spec allows up to 0.3)
  const double e1 = estimate_lipschitz(cubic, mask, 0.08, 12, 7);
  const double e2 = estimate_lipschitz(cubic, mask, 0.04, 12, 7);
  CHECK(e2 / e1 <= 0.3);
  CHECK(e2 > 0.0);

  // monotone in the radius (doubling aligns the sampling ladder)
  CHECK(estimate_lipschitz(cubic, mask, 0.16, 12, 7) >= e1);
  CHECK(e1 >= e2);
}

TEST_CASE("make_cutoff measures constants and enforces the eta gate") {
  const geometry::DomainMask mask = full_mask(make_grid(15));
  const CutoffNonlinearity nl = make_cutoff(mask, NonlinPreset::Cubic, 1.0, 0.05, 0.0, 12, 3);
  CHECK(nl.epsilon > 0.0);
  CHECK(nl.epsilon_local > 0.0);
  CHECK(nl.epsilon < nl.eta / 4.0);
  // cutoff amplification stays within the product-rule factor (recorded)
  CHECK(nl.epsilon <= 3.2 * nl.epsilon_local);
  CHECK_THROWS_AS((void)make_cutoff(mask, NonlinPreset::Cubic, 1.0, 0.05, 1e-9, 12, 3),
                  ConfigError);
}

TEST_CASE("semigroup action: identity at t=0, eigenmode decay, linearity") {
  const geometry::GridSpec grid = make_grid(31);
  const geometry::DomainMask mask = full_mask(grid);
  const auto op = operators::assemble(mask, operators::CoefficientField::constant(grid), 1.0);

  Rng rng(5);
  const Eigen::VectorXd v = rng.normal_vector(op.size());
  CHECK(semigroup_action(op, v, 0.0) == v);

  // first Laplacian eigenvector decays like exp(-2 pi^2 t) within 1%
  const Eigen::VectorXd phi = sine_mode(mask, 1, 1);
  const Eigen::VectorXd evolved = semigroup_action(op, phi, 0.05, 1e-4);
  const double ratio = norm_l2(grid, evolved) / norm_l2(grid, phi);
  CHECK(ratio == doctest::Approx(std::exp(-2.0 * M_PI * M_PI * 0.05)).epsilon(0.01));

  dynamics::LinearPropagator prop(op);
  const Eigen::VectorXd a = rng.normal_vector(op.size()), b = rng.normal_vector(op.size());
  const Eigen::VectorXd sum = prop.advance(a + b, 0.01, 1e-3);
  const Eigen::VectorXd parts = prop.advance(a, 0.01, 1e-3) + prop.advance(b, 0.01, 1e-3);
  CHECK(norm_l2(grid, sum - parts) < 1e-12 * norm_l2(grid, sum));

  CHECK_THROWS_AS((void)semigroup_action(op, v, -1.0), NumericalError);
}

TEST_CASE("group on X+: exact scalar exponential and consistency with the semigroup") {
  ProblemConfig p = shifted_problem(21);
  const auto ins = build_instance(p, full_mask(p.grid));
  REQUIRE(ins->proj.d == 1);
  const double lam = ins->proj.reduced(0, 0);
  CHECK(lam == doctest::Approx(ins->split.sigma_u[0].value.real()).epsilon(1e-8));

  Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 0.3);
  CHECK(group_action_plus(ins->proj, c, 0.0) == c);
  for (double t : {-0.2, 0.1, 0.5})
    CHECK(group_action_plus(ins->proj, c, t)[0] ==
          doctest::Approx(0.3 * std::exp(lam * t)).epsilon(1e-10));

  // forward consistency with the full semigroup
  const Eigen::VectorXd w = ins->proj.embed(c);
  const Eigen::VectorXd via_group = ins->proj.embed(group_action_plus(ins->proj, c, 0.05));
  const Eigen::VectorXd via_semigroup =
      ins->proj.project_plus(semigroup_action(ins->op, w, 0.05, 1e-4));
  CHECK(norm_l2(p.grid, via_group - via_semigroup) < 1e-4 * norm_l2(p.grid, via_group));
}

TEST_CASE("dichotomy fit: recipes and near-1 prefactors in the self-adjoint case") {
  ProblemConfig p = shifted_problem(21);
  {
    const auto ins = build_instance(p, full_mask(p.grid));
    const double lam_u = ins->split.sigma_u[0].value.real();
    CHECK(lam_u == doctest::Approx(30.0 - 2 * M_PI * M_PI).epsilon(0.01));
    CHECK(ins->dc.beta > 0.0);
    CHECK(ins->dc.beta < lam_u);
    CHECK(ins->dc.alpha > 0.0);
    CHECK(ins->dc.alpha < ins->dc.beta);
    CHECK(ins->dc.M1 <= 1.2);
    CHECK(ins->dc.M2 <= 1.2);
  }
  {
    ProblemConfig ps = p;
    ps.split = spectral::SplitKind::Stable;
    const auto ins = build_instance(ps, full_mask(p.grid));
    CHECK(ins->dc.alpha == -ins->dc.sigma_decay);
    CHECK(ins->dc.alpha < ins->dc.beta);
    CHECK(ins->dc.beta < 0.0);
  }
}

TEST_CASE("renormed norms: eigenvector value, sandwich, zero") {
  ProblemConfig p = shifted_problem(21);
  const auto ins = build_instance(p, full_mask(p.grid));
  const geometry::GridSpec& grid = p.grid;

  // slowest X- eigendirection: weighted curve is nonincreasing, sup at t=0
  Eigen::VectorXd phi2 = ins->split.sigma_s.front().right.real();
  phi2 = ins->proj.project_minus(phi2);
  const double l2 = norm_l2(grid, phi2);
  CHECK(ins->renorm->minus_norm(phi2) == doctest::Approx(l2).epsilon(2e-3));

  CHECK(ins->renorm->minus_norm(Eigen::VectorXd::Zero(ins->op.size())) == 0.0);
  CHECK(ins->renorm->plus_norm_coords(Eigen::VectorXd::Zero(1)) == 0.0);

  Rng rng(33);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd v = ins->proj.project_minus(rng.normal_vector(ins->op.size()));
    const double vl = norm_l2(grid, v);
    const double xm = ins->renorm->minus_norm(v);
    CHECK(xm >= vl * (1.0 - 1e-9));
    CHECK(xm <= ins->dc.M1 * vl * (1.0 + 1e-9));
  }
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd c = rng.normal_vector(ins->proj.d);
    const double xp = ins->renorm->plus_norm_coords(c);
    CHECK(xp >= c.norm() * (1.0 - 1e-9));
    CHECK(xp <= ins->dc.M2 * c.norm() * (1.0 + 1e-9));
  }
}

TEST_CASE("semiflow: linear case matches the semigroup, zero stays zero") {
  ProblemConfig p = shifted_problem(21);
  p.nonlin = NonlinPreset::Zero;
  const auto ins = build_instance(p, full_mask(p.grid));
  const auto& grid = p.grid;

  Rng rng(9);
  Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
  u0 *= 0.5 * p.delta / norm_l2(grid, u0);
  const double t = 64.0 * ins->flow->config().dt;
  const Eigen::VectorXd a = ins->flow->flow(u0, t);
  dynamics::LinearPropagator prop(ins->op);
  Eigen::VectorXd b = u0;
  for (int k = 0; k < 64; ++k) b = prop.step(b, ins->flow->config().dt);
  CHECK(norm_l2(grid, a - b) <= 1e-13 * norm_l2(grid, b));

  const Eigen::VectorXd z = ins->flow->flow(Eigen::VectorXd::Zero(ins->op.size()), 0.1);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("trajectory samples cover [0, t] and the modified system is local") {
  ProblemConfig p = shifted_problem(21);
  const auto ins = build_instance(p, full_mask(p.grid));
  Rng rng(10);
  Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
  u0 *= 0.5 * p.delta / norm_l2(p.grid, u0);

  const Trajectory traj = ins->flow->evolve(u0, 0.05);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(traj.states.size() == traj.times.size());

  // inside the delta ball the cutoff leaves the field untouched
  CHECK(modified_f(ins->nl, ins->mask, u0) == raw_f(ins->nl, ins->mask, u0));
}

TEST_CASE("semiflow composition property within scheme tolerance") {
  ProblemConfig p = shifted_problem(21);
  const auto ins = build_instance(p, full_mask(p.grid));
  Rng rng(11);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
    u0 *= 0.6 * p.delta / norm_l2(p.grid, u0);
    const Eigen::VectorXd once = ins->flow->flow(u0, 0.2);
    const Eigen::VectorXd twice = ins->flow->flow(ins->flow->flow(u0, 0.1), 0.1);
    worst = std::max(worst, norm_l2(p.grid, once - twice) / norm_l2(p.grid, once));
  }
  // the AB2 restart at the splice is the only difference; O(dt^2) in size
  const double dt = ins->flow->config().dt;
  CHECK(worst <= 10.0 * 100.0 * dt * dt);
}

TEST_CASE("member trajectories converge to the limit trajectory over the dumbbell family") {
  ProblemConfig p = shifted_problem(21, -45.0);
  const geometry::DomainFamily fam = geometry::build_family(geometry::FamilyKind::Dumbbell, 3, p.grid);
  const auto limit = build_instance(p, fam.limit());

  Eigen::VectorXd u0 = sine_mode(fam.limit(), 1, 1) + 0.3 * sine_mode(fam.limit(), 2, 1);
  u0 *= 0.5 * p.delta / norm_l2(p.grid, u0);
  const Eigen::VectorXd u0_full = geometry::extend_by_zero(u0, fam.limit());

  const Trajectory ref = limit->flow->evolve(u0, 0.3);
  std::vector<double> errs;
  for (const auto& mask : fam.members) {
    const auto member = build_member_instance(p, mask, *limit);
    const Trajectory traj = member->flow->evolve(geometry::restrict_to(u0_full, mask), 0.3);
    double worst = 0.0;
    REQUIRE(traj.times.size() == ref.times.size());
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      if (traj.times[k] < 0.01) continue;
      const Eigen::VectorXd diff = geometry::extend_by_zero(traj.states[k], mask) -
                                   geometry::extend_by_zero(ref.states[k], fam.limit());
      worst = std::max(worst, norm_l2(p.grid, diff));
    }
    errs.push_back(worst);
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[2] < errs[1]);
}
