#include "mperturb/lab.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mperturb/kernels.hpp"
#include "mperturb/rng.hpp"

namespace mperturb::lab {

namespace {

constexpr const char* kVersion = "1.0.0";

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot open output file " + path.string());
  return out;
}

std::string timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d_%H%M%S", &tm);
  return buf;
}

char class_of(const spectral::SpectralSplit& split, const spectral::EigenPair* p) {
  for (const auto& q : split.sigma_u)
    if (&q == p) return 'u';
  for (const auto& q : split.sigma_c)
    if (&q == p) return 'c';
  return 's';
}

void write_spectrum_rows(std::ostream& out, int n, const spectral::SpectralSplit& split) {
  std::vector<const spectral::EigenPair*> all;
  for (const auto& p : split.sigma_u) all.push_back(&p);
  for (const auto& p : split.sigma_c) all.push_back(&p);
  for (const auto& p : split.sigma_s) all.push_back(&p);
  std::sort(all.begin(), all.end(), [](const auto* a, const auto* b) {
    if (a->value.real() != b->value.real()) return a->value.real() > b->value.real();
    return a->value.imag() > b->value.imag();
  });
  int j = 1;
  for (const auto* p : all) {
    out << n << "," << j++ << "," << fmt(p->value.real()) << "," << fmt(p->value.imag()) << ","
        << class_of(split, p) << "," << fmt(p->residual) << "\n";
  }
}

void write_patch_files(const RunPaths& run, const std::string& name,
                       const manifolds::ManifoldPatch& patch, const Instance& ins) {
  auto csv = open_out(run.file(name + ".csv"));
  auto bin = open_out(run.file(name + ".bin"));
  csv << "index,coord_1,coord_2,direction,radius,norm_l2,bin_offset\n";
  std::size_t offset = 0;
  for (std::size_t i = 0; i < patch.samples.size(); ++i) {
    const manifolds::PatchSample& s = patch.samples[i];
    const double c1 = s.coords.size() > 0 ? s.coords[0] : 0.0;
    const double c2 = s.coords.size() > 1 ? s.coords[1] : 0.0;
    csv << i << "," << fmt(c1) << "," << fmt(c2) << "," << s.direction << "," << fmt(s.radius)
        << "," << fmt(s.norm_l2) << "," << offset << "\n";
    bin.write(reinterpret_cast<const char*>(s.full.data()),
              static_cast<std::streamsize>(sizeof(double)) * s.full.size());
    offset += static_cast<std::size_t>(s.full.size());
  }

  nlohmann::json meta;
  meta["kind"] = spectral::to_string(patch.kind);
  meta["alpha"] = ins.dc.alpha;
  meta["beta"] = ins.dc.beta;
  meta["gamma"] = ins.cone.gamma;
  meta["mu"] = ins.cone.mu;
  meta["nu"] = ins.cone.nu;
  meta["epsilon"] = ins.nl.epsilon;
  meta["epsilon_local"] = ins.nl.epsilon_local;
  meta["delta"] = ins.nl.delta;
  meta["eta"] = ins.nl.eta;
  meta["K"] = ins.sched.K;
  meta["t_map"] = ins.sched.t_map;
  meta["m0"] = ins.sched.m0;
  meta["M1"] = ins.dc.M1;
  meta["M2"] = ins.dc.M2;
  meta["delta1"] = patch.delta1;
  meta["delta2"] = patch.delta2;
  meta["delta_hat"] = patch.delta_hat;
  meta["lip"] = patch.lip;
  meta["iterations"] = patch.iterations;
  meta["samples"] = patch.samples.size();
  meta["grid_nodes"] = ins.mask.grid().nodes();
  meta["d"] = ins.proj.d;
  auto mj = open_out(run.file(name + ".json"));
  mj << meta.dump(2) << "\n";
}

void write_trajectory_csv(const RunPaths& run, const std::string& name,
                          const dynamics::Trajectory& traj, const Instance& ins) {
  auto out = open_out(run.file(name));
  out << "t,norm_l2,norm_plus,norm_minus\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const Eigen::VectorXd& u = traj.states[i];
    const double un = geometry::norm_l2(ins.mask.grid(), u);
    const Eigen::VectorXd up = ins.proj.project_plus(u);
    out << fmt(traj.times[i]) << "," << fmt(un) << ","
        << fmt(geometry::norm_l2(ins.mask.grid(), up)) << ","
        << fmt(geometry::norm_l2(ins.mask.grid(), u - up)) << "\n";
  }
}

void write_report_files(const RunPaths& run, const std::string& stem,
                        const perturbation::SemicontinuityReport& report) {
  auto csv = open_out(run.file(stem + ".csv"));
  csv << "n,upper,lower,gap_u,eig_err_1,eig_err_2,eig_err_3,measure_gap,flags\n";
  for (const auto& r : report.records) {
    std::string flags = r.flag;
    if (r.rejected) flags = flags.empty() ? "rejected" : "rejected: " + flags;
    if (!report.hypothesis_met) flags = flags.empty() ? "hypothesis unmet" : flags + "; hypothesis unmet";
    std::replace(flags.begin(), flags.end(), ',', ';');
    csv << r.n << "," << fmt(r.upper) << "," << fmt(r.lower) << "," << fmt(r.gap_u) << ","
        << fmt(r.eig_err[0]) << "," << fmt(r.eig_err[1]) << "," << fmt(r.eig_err[2]) << ","
        << fmt(r.measure_gap) << "," << flags << "\n";
  }

  nlohmann::json meta;
  meta["family"] = report.family;
  meta["kind"] = spectral::to_string(report.kind);
  meta["hypothesis_met"] = report.hypothesis_met;
  meta["alpha"] = report.alpha;
  meta["beta"] = report.beta;
  meta["gamma"] = report.gamma;
  meta["mu"] = report.mu;
  meta["nu"] = report.nu;
  meta["epsilon"] = report.epsilon;
  meta["delta_hat"] = report.delta_hat;
  meta["limit_d"] = report.limit_d;
  meta["limit_samples"] = report.limit_samples;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json j;
    j["n"] = r.n;
    j["rejected"] = r.rejected;
    j["flag"] = r.flag;
    j["upper"] = r.upper;
    j["lower"] = r.lower;
    j["gap_u"] = r.gap_u;
    j["gap_c"] = r.gap_c;
    j["eig_err"] = r.eig_err;
    j["measure_gap"] = r.measure_gap;
    j["indicator_gap_sq"] = r.indicator_gap_sq;
    j["sample_count"] = r.sample_count;
    j["sampling_error"] = r.sampling_error;
    j["basis_conditioning"] = r.basis_conditioning;
    recs.push_back(j);
  }
  meta["records"] = recs;
  auto mj = open_out(run.file(stem + ".json"));
  mj << meta.dump(2) << "\n";
}

}  // namespace

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunPaths prepare_run_dir(const std::string& base, const std::string& name) {
  RunPaths run;
  run.dir = std::filesystem::path(base) / name;
  std::filesystem::create_directories(run.dir);
  return run;
}

void write_manifest(const RunPaths& run, const ExperimentConfig& cfg,
                    const std::string& subcommand, double seconds) {
  nlohmann::json m;
  m["tool"] = "mperturb";
  m["version"] = kVersion;
  m["subcommand"] = subcommand;
  m["seconds"] = seconds;
  m["seed"] = cfg.problem.seed;
  m["threads"] = cfg.problem.threads;
  nlohmann::json echo = nlohmann::json::object();
  for (const auto& [k, v] : cfg.echo) echo[k] = v;
  m["config"] = echo;
  auto out = open_out(run.file("manifest.json"));
  out << m.dump(2) << "\n";
}

void cmd_spectrum(const ExperimentConfig& cfg, const RunPaths& run) {
  const ProblemConfig& p = cfg.problem;
  const geometry::DomainFamily family = geometry::build_family(cfg.family, cfg.n_max, p.grid);
  const operators::CoefficientField coeffs = build_coefficients(p);
  spectral::EigOptions eopts;
  eopts.seed = p.seed;

  auto spectrum_csv = open_out(run.file("spectrum.csv"));
  spectrum_csv << "n,j,Re,Im,class,residual\n";
  auto gaps_csv = open_out(run.file("projector_gaps.csv"));
  gaps_csv << "n,gap_u,gap_c\n";

  const operators::EllipticOperator op0 = operators::assemble(family.limit(), coeffs, p.alpha0);
  if (p.export_matrix) {
    auto coo = open_out(run.file("operator_limit.coo"));
    operators::write_coordinate_format(coo, op0);
  }
  const spectral::SpectralSplit split0 = spectral::analyze(op0, eopts, p.eig_k0);
  write_spectrum_rows(spectrum_csv, 0, split0);

  std::unique_ptr<spectral::Projector> proj0;
  if (split0.hyperbolic) {
    proj0 = std::make_unique<spectral::Projector>(
        spectral::build_projector(op0, split0, p.split, p.seed + 1));
    gaps_csv << 0 << "," << fmt(0.0) << "," << fmt(0.0) << "\n";
  }

  for (int n = 1; n <= family.n_max(); ++n) {
    const geometry::DomainMask& mask = family.members[static_cast<std::size_t>(n - 1)];
    const operators::EllipticOperator op = operators::assemble(mask, coeffs, p.alpha0);
    const spectral::SpectralSplit split = spectral::analyze(op, eopts, p.eig_k0);
    write_spectrum_rows(spectrum_csv, n, split);
    if (split.hyperbolic && proj0 && split.d == split0.d) {
      const spectral::Projector proj =
          spectral::build_projector(op, split, p.split, p.seed + 1);
      gaps_csv << n << "," << fmt(spectral::projector_gap(proj, mask, *proj0, family.limit()))
               << "," << fmt(0.0) << "\n";
    }
  }
}

void cmd_manifold(const ExperimentConfig& cfg, spectral::SplitKind kind, const RunPaths& run) {
  ProblemConfig p = cfg.problem;
  p.split = kind;
  const geometry::DomainFamily family = geometry::build_family(cfg.family, cfg.n_max, p.grid);
  const std::unique_ptr<Instance> ins = build_instance(p, family.limit());
  const manifolds::ManifoldPatch patch = kind == spectral::SplitKind::Unstable
                                             ? manifolds::unstable_manifold(ins->ctx)
                                             : manifolds::stable_manifold(ins->ctx);
  write_patch_files(run, "patch_limit_" + spectral::to_string(kind), patch, *ins);

  // diagnostic trajectory from a small random state
  Rng rng(p.seed + 5);
  Eigen::VectorXd u0 = rng.normal_vector(ins->op.size());
  const double un = geometry::norm_l2(ins->mask.grid(), u0);
  if (un > 0.0) u0 *= 0.5 * ins->nl.delta / un;
  const dynamics::Trajectory traj = ins->flow->evolve(u0, ins->flow->config().t_horizon);
  write_trajectory_csv(run, "trajectory.csv", traj, *ins);
}

void cmd_sweep(const ExperimentConfig& cfg, const RunPaths& run) {
  const ProblemConfig& p = cfg.problem;
  const geometry::DomainFamily family = geometry::build_family(cfg.family, cfg.n_max, p.grid);
  const spectral::SplitKind kind = p.split;

  for (int n = 0; n <= family.n_max(); ++n) {
    const geometry::DomainMask& mask = n == 0 ? family.limit()
                                              : family.members[static_cast<std::size_t>(n - 1)];
    auto out = open_out(run.file(mask.label() + ".mask"));
    mask.write_bitmap(out);
  }

  perturbation::SweepResult result = perturbation::sweep(family, p, kind);
  const std::string stem = geometry::to_string(cfg.family) + "_" + spectral::to_string(kind) +
                           "_" + timestamp_now();
  write_report_files(run, stem, result.report);
  write_patch_files(run, "patch_limit_" + spectral::to_string(kind), result.limit_patch,
                    *result.limit);
  for (std::size_t k = 0; k < result.members.size(); ++k) {
    if (!result.members[k]) continue;
    write_patch_files(run, "patch_n" + std::to_string(k + 1) + "_" + spectral::to_string(kind),
                      result.member_patches[k], *result.members[k]);
  }

  if (kind == spectral::SplitKind::Unstable) {
    const auto rows = perturbation::basis_alignment(result, 10, p.seed + 11);
    auto out = open_out(run.file("basis_alignment.csv"));
    out << "n";
    for (int i = 1; i <= 10; ++i) out << ",probe_" << i;
    out << "\n";
    for (const auto& row : rows) {
      out << row.n;
      for (double e : row.probe_errors) out << "," << fmt(e);
      out << "\n";
    }
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"mperturb: invariant manifolds of semilinear parabolic problems under domain perturbation"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir, manifold_kind = "unstable";
  int threads = -1;
  std::int64_t seed = -1;
  bool print_schema = false, print_defaults = false;

  app.add_flag("--schema", print_schema, "print the config key schema and exit");
  app.add_flag("--print-config", print_defaults, "print the default config and exit");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (default: built-in defaults)");
    sub->add_option("--out", out_dir, "output directory (overrides run.out)");
    sub->add_option("--threads", threads, "worker cap (overrides run.threads)");
    sub->add_option("--seed", seed, "seed (overrides run.seed)");
  };

  CLI::App* sub_spectrum = app.add_subcommand("spectrum", "spectra and projector gaps over the family");
  add_common(sub_spectrum);
  CLI::App* sub_manifold = app.add_subcommand("manifold", "build one manifold patch on the limit domain");
  sub_manifold->add_option("kind", manifold_kind, "stable | unstable")->required();
  add_common(sub_manifold);
  CLI::App* sub_sweep = app.add_subcommand("sweep", "semicontinuity sweep over the family");
  add_common(sub_sweep);
  CLI::App* sub_validate = app.add_subcommand("validate", "run the invariant suite");
  add_common(sub_validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (print_schema) {
    std::cout << config_schema();
    return 0;
  }
  if (print_defaults) {
    std::cout << default_config_text();
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? default_config() : parse_config_file(config_path);
    if (threads >= 0) cfg.problem.threads = threads;
    if (seed >= 0) cfg.problem.seed = static_cast<std::uint64_t>(seed);
    kernels::set_max_threads(cfg.problem.threads);
    const std::string base = out_dir.empty() ? cfg.out_dir : out_dir;

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (sub_spectrum->parsed()) {
      const RunPaths run = prepare_run_dir(base, "spectrum_" + timestamp_now());
      cmd_spectrum(cfg, run);
      write_manifest(run, cfg, "spectrum", elapsed());
      std::cout << "spectrum: wrote " << run.dir.string() << "\n";
    } else if (sub_manifold->parsed()) {
      spectral::SplitKind kind;
      if (manifold_kind == "stable")
        kind = spectral::SplitKind::Stable;
      else if (manifold_kind == "unstable")
        kind = spectral::SplitKind::Unstable;
      else
        throw ConfigError("manifold kind must be 'stable' or 'unstable'");
      const RunPaths run = prepare_run_dir(base, "manifold_" + manifold_kind + "_" + timestamp_now());
      cmd_manifold(cfg, kind, run);
      write_manifest(run, cfg, "manifold " + manifold_kind, elapsed());
      std::cout << "manifold " << manifold_kind << ": wrote " << run.dir.string() << "\n";
    } else if (sub_sweep->parsed()) {
      const RunPaths run = prepare_run_dir(base, "sweep_" + timestamp_now());
      cmd_sweep(cfg, run);
      write_manifest(run, cfg, "sweep", elapsed());
      std::cout << "sweep: wrote " << run.dir.string() << "\n";
    } else if (sub_validate->parsed()) {
      const RunPaths run = prepare_run_dir(base, "validate");
      const ValidateOutcome outcome = cmd_validate(cfg, run);
      write_manifest(run, cfg, "validate", elapsed());
      std::cout << "validate: " << (outcome.total - outcome.failures) << "/" << outcome.total
                << " checks passed; report in " << run.dir.string() << "\n";
      if (outcome.failures > 0) return 4;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace mperturb::lab
