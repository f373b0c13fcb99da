// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and thresholds are pinned in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "mperturb/instance.hpp"
#include "mperturb/lab.hpp"
#include "mperturb/rng.hpp"

using namespace mperturb;
using geometry::full_mask;
using geometry::make_grid;
using geometry::norm_l2;

namespace {

struct Gate {
  int failures = 0;
  int index = 0;

  void report(const std::string& name, bool pass, const std::string& detail) {
    ++index;
    std::printf("[%2d] %s  %s  (%s)\n", index, pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }

  template <typename F>
  void run(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(name, false, std::string("exception: ") + e.what());
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProblemConfig base_problem(int m, double c0) {
  ProblemConfig p;
  p.grid = make_grid(m);
  p.c0 = c0;
  p.delta = 0.01;
  p.amplitude = 25.0;
  p.mesh_points = 17;
  p.fit_samples = 40;
  p.lipschitz_samples = 20;
  p.stable_directions = 4;
  p.stable_radii = 2;
  return p;
}

// ---- 1. eigenvalue oracle ------------------------------------------------

void criterion_eigen_oracle(Gate& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const geometry::GridSpec grid = make_grid(63);
  const auto op =
      operators::assemble(full_mask(grid), operators::CoefficientField::constant(grid), 1.0);
  const auto eigs = spectral::rightmost_eigs(op, 5, std::nan(""), spectral::EigOptions{});
  const double pi2 = M_PI * M_PI;
  const double expect[5] = {-2 * pi2, -5 * pi2, -5 * pi2, -8 * pi2, -10 * pi2};
  double worst = 0.0;
  for (int i = 0; i < 5; ++i)
    worst = std::max(worst,
                     std::abs(eigs[static_cast<std::size_t>(i)].value.real() - expect[i]) /
                         std::abs(expect[i]));
  const double elapsed = seconds_since(t0);
  std::ostringstream os;
  os << "max rel err " << worst << " vs 0.02, " << elapsed << "s vs 30s";
  g.report("eigenvalue oracle: Dirichlet Laplacian m=63 vs pi^2(j^2+k^2)",
           worst < 0.02 && elapsed < 30.0, os.str());
}

// ---- 2. Garding inequality ----------------------------------------------

void criterion_garding(Gate& g) {
  const geometry::GridSpec grid = make_grid(31);
  const geometry::DomainMask mask = full_mask(grid);
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

  Rng rng(101);
  int violations = 0;
  double min_slack = 1e300;
  for (auto& p : presets) {
    p.grid = grid;
    const auto op = operators::assemble(mask, build_coefficients(p), p.alpha0);
    for (int t = 0; t < 200; ++t) {
      const Eigen::VectorXd u = rng.normal_vector(op.size());
      const double lhs = operators::form_value(op, u, u) +
                         op.lambda0 * std::pow(norm_l2(grid, u), 2);
      const double slack = lhs - 0.5 * op.alpha0 * operators::h1_norm_sq(mask, u);
      min_slack = std::min(min_slack, slack);
      if (slack < 0.0) ++violations;
    }
  }
  std::ostringstream os;
  os << violations << " violations over 3x200 vectors, min slack " << min_slack;
  g.report("Garding inequality on three coefficient presets", violations == 0, os.str());
}

// ---- 3. linear exactness -------------------------------------------------

void criterion_linear_exactness(Gate& g) {
  ProblemConfig p = base_problem(31, -30.0);
  p.nonlin = dynamics::NonlinPreset::Zero;
  const geometry::DomainMask mask = full_mask(p.grid);

  p.split = spectral::SplitKind::Unstable;
  const auto uns = build_instance(p, mask);
  const auto upatch = manifolds::unstable_manifold(uns->ctx);

  p.split = spectral::SplitKind::Stable;
  const auto sta = build_instance(p, mask);
  const auto spatch = manifolds::stable_manifold(sta->ctx);
  double worst_plus = 0.0;
  for (const auto& s : spatch.samples)
    if (s.coords.size() > 0)
      worst_plus = std::max(worst_plus, norm_l2(p.grid, sta->proj.embed(s.coords)));

  std::ostringstream os;
  os << "unstable lip " << upatch.lip << ", stable X+ part " << worst_plus << " vs 1e-8";
  g.report("linear exactness: flat stable and unstable graphs",
           upatch.lip <= 1e-8 && worst_plus <= 1e-8, os.str());
}

// ---- 4 & 7. contraction constant and tangency ----------------------------

struct CubicArtifacts {
  std::unique_ptr<Instance> ins;
  manifolds::ManifoldPatch patch;
};

CubicArtifacts& cubic_artifacts() {
  static CubicArtifacts art = [] {
    ProblemConfig p = base_problem(31, -30.0);
    p.split = spectral::SplitKind::Unstable;
    CubicArtifacts a;
    a.ins = build_instance(p, full_mask(p.grid));
    a.patch = manifolds::unstable_manifold(a.ins->ctx);
    return a;
  }();
  return art;
}

void criterion_contraction(Gate& g) {
  const auto& [ins, patch] = cubic_artifacts();
  double worst_ratio = 0.0;
  for (double r : patch.contraction_ratios) worst_ratio = std::max(worst_ratio, r);
  const bool ratios_ok = worst_ratio <= 1.1 * ins->sched.K;
  const bool count_ok = patch.iterations <= patch.m0 + 3;
  std::ostringstream os;
  os << "max ratio " << worst_ratio << " vs 1.1K = " << 1.1 * ins->sched.K << "; iterations "
     << patch.iterations << " vs m0+3 = " << patch.m0 + 3;
  g.report("graph-transform contraction on the cubic preset", ratios_ok && count_ok, os.str());
}

void criterion_tangency(Gate& g) {
  const auto& [ins, patch] = cubic_artifacts();
  const auto& graph = patch.graph;
  auto slope_at = [&](double r) {
    double worst = 0.0;
    for (double sgn : {-1.0, 1.0}) {
      const Eigen::VectorXd c = Eigen::VectorXd::Constant(1, sgn * r);
      worst = std::max(worst, ins->renorm->minus_norm(graph.value_at(c)) /
                                  ins->renorm->plus_norm_coords(c));
    }
    return worst;
  };
  const double s_quarter = slope_at(graph.r_mesh / 4.0);
  const double s_full = slope_at(graph.r_mesh);
  std::ostringstream os;
  os << "slope(R/4) = " << s_quarter << " vs 0.6 * slope(R) = " << 0.6 * s_full;
  g.report("tangency: secant slope drops toward the origin",
           s_full > 0.0 && s_quarter <= 0.6 * s_full, os.str());
}

// ---- 5. cone invariance ---------------------------------------------------

void criterion_cone_invariance(Gate& g) {
  ProblemConfig p = base_problem(21, -30.0);
  p.split = spectral::SplitKind::Unstable;
  const auto ins = build_instance(p, full_mask(p.grid));
  const auto& proj = ins->proj;
  const auto& renorm = *ins->renorm;

  Rng rng(202);
  int violations = 0;
  const double lambdas[3] = {ins->cone.mu, 1.0, ins->cone.nu};
  for (int start = 0; start < 100; ++start) {
    Eigen::VectorXd v = proj.project_minus(rng.normal_vector(ins->op.size()));
    Eigen::VectorXd wc = rng.normal_vector(proj.d);
    const double vn = renorm.minus_norm(v);
    const double wn = renorm.plus_norm_coords(wc);
    if (vn == 0.0 || wn == 0.0) continue;
    const double lambda = lambdas[start % 3];
    // scale onto the cone boundary, then into the cutoff ball
    wc *= lambda * vn / wn;
    Eigen::VectorXd u = v + proj.embed(wc);
    u *= 0.5 * ins->nl.delta / norm_l2(p.grid, u);

    const dynamics::Trajectory traj =
        dynamics::Semiflow(ins->op, ins->nl,
                           dynamics::SemiflowConfig{dynamics::Scheme::CnAb,
                                                    ins->flow->config().dt, 1})
            .evolve(u, 50.0 * ins->flow->config().dt);
    bool inside = true;
    for (const Eigen::VectorXd& state : traj.states) {
      const Eigen::VectorXd c = proj.coords(state);
      const double wnn = renorm.plus_norm_coords(c);
      const double vnn = renorm.minus_norm(state - proj.embed(c));
      const bool member = manifolds::cone_membership(vnn, wnn * (1.0 + 1e-9), lambda);
      if (!member && inside) {
        ++violations;
        break;
      }
    }
  }
  std::ostringstream os;
  os << violations << " violations over 100 starts x 3 lambda x 50 steps";
  g.report("cone invariance along the modified flow", violations == 0, os.str());
}

// ---- 6. norm sandwiches ----------------------------------------------------

void criterion_sandwiches(Gate& g) {
  int violations = 0;
  double worst = -1e300;
  for (spectral::SplitKind kind : {spectral::SplitKind::Unstable, spectral::SplitKind::Stable}) {
    ProblemConfig p = base_problem(21, -30.0);
    p.split = kind;
    const auto ins = build_instance(p, full_mask(p.grid));
    Rng rng(303);
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd v = ins->proj.project_minus(rng.normal_vector(ins->op.size()));
      const double l2 = norm_l2(p.grid, v);
      if (l2 == 0.0) continue;
      const double xm = ins->renorm->minus_norm(v);
      worst = std::max({worst, (l2 - xm) / l2, (xm - ins->dc.M1 * l2) / l2});
      if (xm < l2 * (1 - 1e-9) || xm > ins->dc.M1 * l2 * (1 + 1e-9)) ++violations;
    }
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd c = rng.normal_vector(ins->proj.d);
      const double xp = ins->renorm->plus_norm_coords(c);
      worst = std::max({worst, (c.norm() - xp) / c.norm(), (xp - ins->dc.M2 * c.norm()) / c.norm()});
      if (xp < c.norm() * (1 - 1e-9) || xp > ins->dc.M2 * c.norm() * (1 + 1e-9)) ++violations;
    }
  }
  std::ostringstream os;
  os << violations << " violations over 100 vectors per side and split, worst margin " << worst;
  g.report("renormed norm sandwiches on both splits", violations == 0, os.str());
}

// ---- 8. integrator self-convergence ----------------------------------------

void criterion_integrator(Gate& g) {
  const geometry::GridSpec grid = make_grid(21);
  const geometry::DomainMask mask = full_mask(grid);
  const auto op = operators::assemble(
      mask, operators::CoefficientField::constant(grid, 1, 1, 0, 0, 0, 0, 0, -30.0), 1.0);
  const auto nl = dynamics::make_cutoff(mask, dynamics::NonlinPreset::Cubic, 10.0, 1.0, 0.0, 6, 404);
  Rng rng(404);
  Eigen::VectorXd u0 = rng.normal_vector(op.size());
  u0 *= 0.8 / norm_l2(grid, u0);
  auto err_at = [&](double dt) {
    const Eigen::VectorXd a =
        dynamics::Semiflow(op, nl, {dynamics::Scheme::CnAb, dt, 1 << 20}).flow(u0, 0.1);
    const Eigen::VectorXd b =
        dynamics::Semiflow(op, nl, {dynamics::Scheme::CnAb, dt / 4, 1 << 20}).flow(u0, 0.1);
    return norm_l2(grid, a - b);
  };
  const double ratio = err_at(2e-3) / err_at(1e-3);
  std::ostringstream os;
  os << "error ratio " << ratio << " vs [3.2, 4.8]";
  g.report("CN-AB self-convergence under dt halving", ratio > 3.2 && ratio < 4.8, os.str());
}

// ---- 9. semicontinuity trend ------------------------------------------------

bool trend_ok(const perturbation::SemicontinuityReport& report, bool use_upper,
              std::string& detail) {
  std::vector<double> vals;
  for (const auto& r : report.records) {
    if (r.rejected) {
      detail = "member n=" + std::to_string(r.n) + " rejected: " + r.flag;
      return false;
    }
    vals.push_back(use_upper ? r.upper : r.lower);
  }
  if (vals.size() < 2) {
    detail = "not enough members";
    return false;
  }
  int bad_steps = 0;
  for (std::size_t k = 0; k + 1 < vals.size(); ++k)
    if (vals[k + 1] >= vals[k]) ++bad_steps;
  const bool halved = vals.back() <= 0.5 * vals.front();
  std::ostringstream os;
  os << (use_upper ? "upper" : "lower") << ": first " << vals.front() << ", last " << vals.back()
     << ", non-monotone steps " << bad_steps;
  detail = os.str();
  return halved && bad_steps <= 1;
}

void criterion_semicontinuity(Gate& g) {
  const auto t0 = std::chrono::steady_clock::now();
  ProblemConfig p = base_problem(63, -45.0);
  p.mesh_points = 21;
  p.stable_directions = 6;
  p.stable_radii = 2;
  p.fit_samples = 60;
  const geometry::DomainFamily fam = geometry::build_family(geometry::FamilyKind::Dumbbell, 4, p.grid);

  bool all_ok = true;
  std::string detail;
  for (spectral::SplitKind kind : {spectral::SplitKind::Unstable, spectral::SplitKind::Stable}) {
    const perturbation::SweepResult result = perturbation::sweep(fam, p, kind);
    if (result.report.limit_d != 1) {
      all_ok = false;
      detail += std::string(spectral::to_string(kind)) + ": d != 1; ";
      continue;
    }
    for (bool upper : {true, false}) {
      std::string part;
      const bool ok = trend_ok(result.report, upper, part);
      all_ok &= ok;
      detail += std::string(spectral::to_string(kind)) + " " + part + "; ";
    }
  }
  const double elapsed = seconds_since(t0);
  all_ok &= elapsed < 900.0;
  detail += std::to_string(elapsed) + "s vs 900s";
  g.report("semicontinuity trend on the dumbbell family (both kinds)", all_ok, detail);
}

// ---- 10. fingers counterexample ----------------------------------------------

void criterion_fingers(Gate& g) {
  ProblemConfig p = base_problem(63, -45.0);
  const geometry::DomainFamily fam = geometry::build_family(geometry::FamilyKind::Fingers, 3, p.grid);
  const auto coeffs = build_coefficients(p);
  spectral::EigOptions eopts;
  eopts.seed = p.seed;

  const auto op0 = operators::assemble(fam.limit(), coeffs, p.alpha0);
  const auto split0 = spectral::analyze(op0, eopts);
  const auto proj0 = spectral::build_projector(op0, split0, spectral::SplitKind::Unstable);

  std::vector<double> gaps;
  double measure_gap_spread = 0.0;
  const double gap0_sq = [&] {
    const Eigen::VectorXd d =
        geometry::extend_by_zero(geometry::indicator(fam.members[0]), fam.members[0]) -
        geometry::extend_by_zero(geometry::indicator(fam.limit()), fam.limit());
    return geometry::inner_l2(p.grid, d, d);
  }();
  for (const auto& mask : fam.members) {
    const auto op = operators::assemble(mask, coeffs, p.alpha0);
    const auto split = spectral::analyze(op, eopts);
    const auto proj = spectral::build_projector(op, split, spectral::SplitKind::Unstable);
    gaps.push_back(spectral::projector_gap(proj, mask, proj0, fam.limit()));

    const Eigen::VectorXd d = geometry::extend_by_zero(geometry::indicator(mask), mask) -
                              geometry::extend_by_zero(geometry::indicator(fam.limit()), fam.limit());
    measure_gap_spread =
        std::max(measure_gap_spread, std::abs(geometry::inner_l2(p.grid, d, d) - gap0_sq));
  }
  bool decreasing = true;
  for (std::size_t k = 0; k + 1 < gaps.size(); ++k) decreasing &= gaps[k + 1] < gaps[k];
  const bool below = gaps.back() < 1e-2;
  const bool constant_measure = measure_gap_spread <= 1e-12;

  std::ostringstream os;
  os << "gap_u: ";
  for (double v : gaps) os << v << " ";
  os << "(last vs 1e-2), indicator-gap spread " << measure_gap_spread;
  g.report("fingers: projector gap vanishes while the measure gap persists",
           decreasing && below && constant_measure, os.str());
}

// ---- 11. determinism -----------------------------------------------------------

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism(Gate& g) {
  const auto tmp = std::filesystem::temp_directory_path() / "mperturb_acceptance";
  std::filesystem::remove_all(tmp);
  lab::ExperimentConfig cfg = lab::default_config();
  const lab::RunPaths run_a = lab::prepare_run_dir(tmp.string(), "a");
  const lab::RunPaths run_b = lab::prepare_run_dir(tmp.string(), "b");
  const auto out_a = lab::cmd_validate(cfg, run_a, /*quiet=*/true);
  const auto out_b = lab::cmd_validate(cfg, run_b, /*quiet=*/true);
  const std::string bytes_a = slurp(run_a.file("validate_report.csv"));
  const std::string bytes_b = slurp(run_b.file("validate_report.csv"));
  std::ostringstream os;
  os << "validate " << (out_a.total - out_a.failures) << "/" << out_a.total
     << " twice; reports " << (bytes_a == bytes_b ? "byte-identical" : "DIFFER");
  g.report("determinism: repeated validate runs are byte-identical",
           out_a.failures == 0 && out_b.failures == 0 && !bytes_a.empty() && bytes_a == bytes_b,
           os.str());
}

}  // namespace

int main() {
  Gate gate;
  std::printf("acceptance suite\n");
  gate.run("eigenvalue oracle", [&] { criterion_eigen_oracle(gate); });
  gate.run("Garding", [&] { criterion_garding(gate); });
  gate.run("linear exactness", [&] { criterion_linear_exactness(gate); });
  gate.run("contraction", [&] { criterion_contraction(gate); });
  gate.run("cone invariance", [&] { criterion_cone_invariance(gate); });
  gate.run("norm sandwiches", [&] { criterion_sandwiches(gate); });
  gate.run("tangency", [&] { criterion_tangency(gate); });
  gate.run("integrator", [&] { criterion_integrator(gate); });
  gate.run("semicontinuity", [&] { criterion_semicontinuity(gate); });
  gate.run("fingers", [&] { criterion_fingers(gate); });
  gate.run("determinism", [&] { criterion_determinism(gate); });
  std::printf("%d criteria failed\n", gate.failures);
  return gate.failures == 0 ? 0 : 1;
}
