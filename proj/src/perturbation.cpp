#include "mperturb/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mperturb/kernels.hpp"
#include "mperturb/rng.hpp"

namespace mperturb::perturbation {

using geometry::DomainMask;

double upper_semidistance(const std::vector<Eigen::VectorXd>& samples_n,
                          const std::vector<Eigen::VectorXd>& samples, double spacing) {
  if (samples_n.empty() || samples.empty())
    throw NumericalError("semidistance: empty sample cloud");
  return kernels::maxmin_distance(samples_n, samples, spacing);
}

double lower_semidistance(const std::vector<Eigen::VectorXd>& samples,
                          const std::vector<Eigen::VectorXd>& samples_n, double spacing) {
  if (samples_n.empty() || samples.empty())
    throw NumericalError("semidistance: empty sample cloud");
  return kernels::maxmin_distance(samples, samples_n, spacing);
}

namespace {

std::vector<Eigen::VectorXd> cloud_of(const manifolds::ManifoldPatch& patch, int stride = 1) {
  std::vector<Eigen::VectorXd> cloud;
  for (std::size_t i = 0; i < patch.samples.size(); i += static_cast<std::size_t>(stride))
    cloud.push_back(patch.samples[i].full);
  return cloud;
}

manifolds::ManifoldPatch build_patch(const Instance& ins, spectral::SplitKind kind) {
  return kind == spectral::SplitKind::Unstable ? manifolds::unstable_manifold(ins.ctx)
                                               : manifolds::stable_manifold(ins.ctx);
}

double indicator_gap_sq(const DomainMask& member, const DomainMask& limit) {
  const Eigen::VectorXd a = geometry::extend_by_zero(geometry::indicator(member), member);
  const Eigen::VectorXd b = geometry::extend_by_zero(geometry::indicator(limit), limit);
  const double d = geometry::norm_l2(member.grid(), a - b);
  return d * d;
}

// Pre-pass over the family spectra: one (alpha, beta) pair must serve every
// member, so the exponents are anchored at the family-wide minima of the
// stable bound and of min Re sigma^u.
dynamics::DichotomyCaps family_caps(const geometry::DomainFamily& family,
                                    const ProblemConfig& cfg) {
  const operators::CoefficientField coeffs = build_coefficients(cfg);
  spectral::EigOptions eopts;
  eopts.seed = cfg.seed;

  dynamics::DichotomyCaps caps;
  double stable_min = std::numeric_limits<double>::infinity();
  double unstable_min = std::numeric_limits<double>::infinity();
  int d_limit = -1;

  auto account = [&](const DomainMask& mask, bool require) {
    try {
      const operators::EllipticOperator op = operators::assemble(mask, coeffs, cfg.alpha0);
      const spectral::SpectralSplit split = spectral::analyze(op, eopts, cfg.eig_k0);
      if (!split.hyperbolic || split.sigma_s.empty()) return false;
      if (d_limit >= 0 && split.d != d_limit) return false;
      if (d_limit < 0) d_limit = split.d;
      stable_min = std::min(stable_min, -split.sigma_s.front().value.real());
      if (split.d > 0) unstable_min = std::min(unstable_min, split.sigma_u.back().value.real());
      return true;
    } catch (const std::exception&) {
      if (require) throw;
      return false;
    }
  };

  account(family.limit(), true);
  for (const DomainMask& m : family.members) account(m, false);

  if (std::isfinite(stable_min)) caps.stable_bound = stable_min;
  if (std::isfinite(unstable_min)) caps.unstable_min = unstable_min;
  return caps;
}

}  // namespace

SweepResult sweep(const geometry::DomainFamily& family, const ProblemConfig& cfg,
                  spectral::SplitKind kind) {
  ProblemConfig pc = cfg;
  pc.split = kind;
  pc.caps = family_caps(family, pc);

  SweepResult out;
  out.report.family = geometry::to_string(family.kind);
  out.report.kind = kind;

  out.limit = build_instance(pc, family.limit());
  const Instance& limit = *out.limit;
  out.limit_patch = build_patch(limit, kind);

  out.report.alpha = limit.dc.alpha;
  out.report.beta = limit.dc.beta;
  out.report.gamma = limit.cone.gamma;
  out.report.mu = limit.cone.mu;
  out.report.nu = limit.cone.nu;
  out.report.epsilon = limit.nl.epsilon;
  out.report.delta_hat = limit.ctx.delta_hat;
  out.report.limit_d = limit.split.d;
  out.report.limit_samples = static_cast<int>(out.limit_patch.samples.size());

  if (kind == spectral::SplitKind::Stable) {
    // hypothesis of the stable-manifold theorem: |Omega_n| -> |Omega|
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (const DomainMask& m : family.members) {
      const double gap = std::abs(m.measure() - family.limit().measure());
      if (!(gap < prev || gap == 0.0)) decreasing = false;
      prev = gap;
    }
    out.report.hypothesis_met = decreasing;
  }

  const std::vector<Eigen::VectorXd> limit_cloud = cloud_of(out.limit_patch);
  const std::vector<Eigen::VectorXd> limit_cloud_half = cloud_of(out.limit_patch, 2);
  const double h = family.grid.spacing();
  const spectral::SubspaceBasis limit_basis = spectral::plus_basis(limit.proj);

  for (int k = 0; k < family.n_max(); ++k) {
    const DomainMask& mask = family.members[static_cast<std::size_t>(k)];
    MemberRecord rec;
    rec.n = k + 1;
    rec.flag = family.params[static_cast<std::size_t>(k)].note;
    rec.measure_gap = mask.measure() - family.limit().measure();
    rec.indicator_gap_sq = indicator_gap_sq(mask, family.limit());

    std::unique_ptr<Instance> member;
    manifolds::ManifoldPatch patch;
    try {
      member = build_member_instance(pc, mask, limit);
      patch = build_patch(*member, kind);
    } catch (const std::exception& e) {
      rec.rejected = true;
      rec.flag = rec.flag.empty() ? e.what() : rec.flag + "; " + e.what();
      out.members.emplace_back(nullptr);
      out.member_patches.emplace_back();
      out.report.records.push_back(std::move(rec));
      continue;
    }

    rec.gap_u = spectral::projector_gap(member->proj, member->mask, limit.proj, limit.mask);
    rec.gap_c = 0.0;  // both problems are hyperbolic, the center projections vanish
    for (std::size_t j = 0; j < 3; ++j) {
      auto value_at = [](const spectral::SpectralSplit& s, std::size_t idx)
          -> std::complex<double> {
        std::vector<std::complex<double>> all;
        for (const auto& p : s.sigma_u) all.push_back(p.value);
        for (const auto& p : s.sigma_c) all.push_back(p.value);
        for (const auto& p : s.sigma_s) all.push_back(p.value);
        return idx < all.size() ? all[idx] : std::complex<double>(0, 0);
      };
      rec.eig_err[j] = std::abs(value_at(member->split, j) - value_at(limit.split, j));
    }
    try {
      rec.basis_conditioning =
          spectral::pushforward_basis(limit_basis, limit.mask, member->mask, member->proj)
              .conditioning;
    } catch (const std::exception& e) {
      rec.flag = rec.flag.empty() ? e.what() : rec.flag + "; " + e.what();
    }

    const std::vector<Eigen::VectorXd> member_cloud = cloud_of(patch);
    rec.sample_count = static_cast<int>(member_cloud.size());
    rec.upper = upper_semidistance(member_cloud, limit_cloud, h);
    rec.lower = lower_semidistance(limit_cloud, member_cloud, h);

    const std::vector<Eigen::VectorXd> member_cloud_half = cloud_of(patch, 2);
    const double upper_half = upper_semidistance(member_cloud_half, limit_cloud_half, h);
    const double lower_half = lower_semidistance(limit_cloud_half, member_cloud_half, h);
    rec.sampling_error = std::abs(upper_half - rec.upper) + std::abs(lower_half - rec.lower);

    out.members.push_back(std::move(member));
    out.member_patches.push_back(std::move(patch));
    out.report.records.push_back(std::move(rec));
  }

  bool all_rejected = true;
  for (const MemberRecord& r : out.report.records) all_rejected &= r.rejected;
  if (!out.report.records.empty() && all_rejected)
    throw NumericalError("sweep: every family member was rejected");
  return out;
}

std::vector<AlignmentRow> basis_alignment(const SweepResult& result, int probes,
                                          std::uint64_t seed) {
  if (result.report.kind != spectral::SplitKind::Unstable)
    throw NumericalError("basis_alignment requires an unstable sweep");
  const Instance& limit = *result.limit;
  const geometry::GridSpec& grid = limit.mask.grid();
  const double r_probe = 0.5 * limit.ctx.r_mesh;

  // fixed probe set in L2(D), scaled so the limit coordinates sit inside the mesh
  Rng rng(seed);
  std::vector<Eigen::VectorXd> probe_set;
  for (int i = 0; i < probes; ++i) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(grid.nodes());
    for (int mode = 0; mode < 4; ++mode) {
      const int kx = 1 + static_cast<int>(rng.next_u64() % 4);
      const int ky = 1 + static_cast<int>(rng.next_u64() % 4);
      const double amp = rng.normal();
      for (int j = 1; j <= grid.m; ++j)
        for (int ii = 1; ii <= grid.m; ++ii)
          full[grid.index(ii, j)] += amp * std::sin(kx * M_PI * (grid.x(ii) - grid.x0) / grid.side) *
                                     std::sin(ky * M_PI * (grid.y(j) - grid.y0) / grid.side);
    }
    const Eigen::VectorXd c = limit.proj.coords(geometry::restrict_to(full, limit.mask));
    const double cn = c.norm();
    if (cn > 0.0) full *= r_probe / cn;
    probe_set.push_back(std::move(full));
  }

  std::vector<AlignmentRow> rows;
  for (std::size_t k = 0; k < result.members.size(); ++k) {
    if (!result.members[k]) continue;
    const Instance& member = *result.members[k];
    const manifolds::ManifoldPatch& patch = result.member_patches[k];
    AlignmentRow row;
    row.n = static_cast<int>(k) + 1;
    for (const Eigen::VectorXd& u : probe_set) {
      const Eigen::VectorXd c = limit.proj.coords(geometry::restrict_to(u, limit.mask));
      const Eigen::VectorXd cn = member.proj.coords(geometry::restrict_to(u, member.mask));
      const Eigen::VectorXd hv = result.limit_patch.graph.value_at(c);
      const Eigen::VectorXd hnv = patch.graph.value_at(cn);
      const Eigen::VectorXd diff = geometry::extend_by_zero(hnv, member.mask) -
                                   geometry::extend_by_zero(hv, limit.mask);
      row.probe_errors.push_back(geometry::norm_l2(grid, diff));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mperturb::perturbation
