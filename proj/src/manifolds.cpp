#include "mperturb/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mperturb/rng.hpp"
#include "mperturb/smallmat.hpp"

namespace mperturb::manifolds {

using dynamics::DichotomyConstants;
using geometry::norm_l2;

ConeParams select_cone_params(const DichotomyConstants& dc, double epsilon) {
  ConeParams cone;
  cone.epsilon = epsilon;
  if (!(dc.beta > dc.alpha)) throw NumericalError("select_cone_params: beta must exceed alpha");
  if (!(epsilon < (dc.beta - dc.alpha) / 4.0)) {
    cone.feasible = false;
    cone.violated = "epsilon < (beta - alpha)/4";
    return cone;
  }
  for (double mu : {0.5, 0.25, 0.1}) {
    for (double nu : {2.0, 4.0, 10.0}) {
      if (!(epsilon < (dc.beta - dc.alpha) / (2.0 + nu + 1.0 / mu))) continue;
      const double lo = epsilon * (1.0 + 1.0 / mu) - dc.beta;
      const double hi = -epsilon * (1.0 + nu) - dc.alpha;
      if (!(lo < hi)) continue;
      cone.mu = mu;
      cone.nu = nu;
      cone.gamma = 0.5 * (lo + hi);
      cone.feasible = true;
      return cone;
    }
  }
  cone.feasible = false;
  cone.violated = "epsilon < (beta - alpha)/(2 + nu + 1/mu) for all grid pairs";
  return cone;
}

void require_feasible(const ConeParams& cone) {
  if (cone.feasible) return;
  std::ostringstream os;
  os << "cone parameters infeasible: violated " << cone.violated << " with epsilon = "
     << cone.epsilon << "; shrink delta (smaller epsilon) or widen the spectral gap";
  throw ConfigError(os.str());
}

bool cone_membership(double v_norm_minus, double w_norm_plus, double lambda) {
  if (!(lambda > 0.0)) throw NumericalError("cone_membership: lambda must be positive");
  return lambda * v_norm_minus <= w_norm_plus;
}

int GraphFunction::npoints() const {
  return d == 1 ? points_per_axis : points_per_axis * points_per_axis;
}

double GraphFunction::axis_coord(int k) const {
  const double step = 2.0 * r_mesh / (points_per_axis - 1);
  return -r_mesh + k * step;
}

Eigen::VectorXd GraphFunction::coords_of(int idx) const {
  Eigen::VectorXd c(d);
  if (d == 1) {
    c[0] = axis_coord(idx);
  } else {
    c[0] = axis_coord(idx % points_per_axis);
    c[1] = axis_coord(idx / points_per_axis);
  }
  return c;
}

Eigen::VectorXd GraphFunction::value_at(const Eigen::VectorXd& coords) const {
  const double step = 2.0 * r_mesh / (points_per_axis - 1);
  auto locate = [&](double x, int& cell, double& theta) {
    const double clamped = std::clamp(x, -r_mesh, r_mesh);
    double pos = (clamped + r_mesh) / step;
    cell = std::min(points_per_axis - 2, static_cast<int>(std::floor(pos)));
    theta = std::clamp(pos - cell, 0.0, 1.0);
  };
  if (d == 1) {
    int k;
    double th;
    locate(coords[0], k, th);
    return (1.0 - th) * values[static_cast<std::size_t>(k)] +
           th * values[static_cast<std::size_t>(k + 1)];
  }
  int kx, ky;
  double tx, ty;
  locate(coords[0], kx, tx);
  locate(coords[1], ky, ty);
  const int p = points_per_axis;
  const auto& v00 = values[static_cast<std::size_t>(ky * p + kx)];
  const auto& v10 = values[static_cast<std::size_t>(ky * p + kx + 1)];
  const auto& v01 = values[static_cast<std::size_t>((ky + 1) * p + kx)];
  const auto& v11 = values[static_cast<std::size_t>((ky + 1) * p + kx + 1)];
  return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11;
}

GraphFunction zero_graph(int d, double r_mesh, int points_per_axis, int n_minus) {
  if (d < 1 || d > 2)
    throw ConfigError("graph mesh supports d in {1, 2}; got d = " + std::to_string(d));
  if (points_per_axis < 3 || points_per_axis % 2 == 0)
    throw ConfigError("mesh points per axis must be odd and at least 3");
  if (!(r_mesh > 0.0)) throw ConfigError("r_mesh must be positive");
  GraphFunction h;
  h.d = d;
  h.points_per_axis = points_per_axis;
  h.r_mesh = r_mesh;
  h.values.assign(static_cast<std::size_t>(d == 1 ? points_per_axis
                                                  : points_per_axis * points_per_axis),
                  Eigen::VectorXd::Zero(n_minus));
  const int mid = (points_per_axis - 1) / 2;
  h.zero_index = d == 1 ? mid : mid * points_per_axis + mid;
  h.lip = 0.0;
  return h;
}

FixedPointSchedule make_schedule(const DichotomyConstants& dc, const ConeParams& cone,
                                 double t_map, double tol, int m_max) {
  require_feasible(cone);
  FixedPointSchedule s;
  s.tol = tol;
  s.m_max = m_max;
  const double rate = dc.alpha - dc.beta + cone.epsilon * (2.0 + cone.mu + 1.0 / cone.nu);
  const double prefactor = cone.nu / (cone.nu - cone.mu);
  if (!(rate < 0.0))
    throw NumericalError("graph transform cannot contract: decay rate is nonnegative");
  s.t_map = t_map > 0.0 ? t_map : std::log(0.5 / prefactor) / rate;
  s.K = prefactor * std::exp(rate * s.t_map);
  if (!(s.K < 1.0))
    throw NumericalError("graph transform constant K = " + std::to_string(s.K) +
                         " is not a contraction; increase t_map");
  const double target = tol * (1.0 - s.K) / (2.0 / cone.nu);
  s.m0 = target >= 1.0 ? 1 : std::max(1, static_cast<int>(std::ceil(std::log(target) / std::log(s.K))));
  return s;
}

namespace {

// Parent of a mesh node: one step toward the center (x first). The clamp
// walks parent edges outward so the enforced bound propagates from 0.
int parent_of(const GraphFunction& h, int idx) {
  const int p = h.points_per_axis;
  const int mid = (p - 1) / 2;
  if (h.d == 1) return idx < mid ? idx + 1 : idx - 1;
  int kx = idx % p, ky = idx / p;
  if (kx != mid)
    kx += kx < mid ? 1 : -1;
  else
    ky += ky < mid ? 1 : -1;
  return ky * p + kx;
}

std::vector<int> outward_order(const GraphFunction& h) {
  const int p = h.points_per_axis;
  const int mid = (p - 1) / 2;
  std::vector<int> order(static_cast<std::size_t>(h.npoints()));
  std::iota(order.begin(), order.end(), 0);
  auto ring = [&](int idx) {
    if (h.d == 1) return std::abs(idx - mid);
    return std::max(std::abs(idx % p - mid), std::abs(idx / p - mid));
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ring(a) < ring(b); });
  return order;
}

// Clamp the graph into the nu^{-1}-Lipschitz class along parent edges and
// measure the resulting constant; h(0) stays pinned at 0.
void clamp_and_measure(GraphFunction& h, const ManifoldContext& ctx) {
  const double inv_nu = 1.0 / ctx.cone.nu;
  h.values[static_cast<std::size_t>(h.zero_index)].setZero();
  double lip = 0.0;
  for (int idx : outward_order(h)) {
    if (idx == h.zero_index) continue;
    const int par = parent_of(h, idx);
    const Eigen::VectorXd dc = h.coords_of(idx) - h.coords_of(par);
    const double nw = ctx.renorm->plus_norm_coords(dc);
    Eigen::VectorXd dv = h.values[static_cast<std::size_t>(idx)] -
                         h.values[static_cast<std::size_t>(par)];
    double nv = ctx.renorm->minus_norm(dv);
    if (nv > inv_nu * nw && nv > 0.0) {
      dv *= inv_nu * nw / nv;
      h.values[static_cast<std::size_t>(idx)] = h.values[static_cast<std::size_t>(par)] + dv;
      nv = inv_nu * nw;
    }
    if (nw > 0.0) lip = std::max(lip, nv / nw);
  }
  h.lip = lip;
}

struct Barycentric {
  double w0, w1, w2;
  double margin() const { return std::min({w0, w1, w2}); }
};

Barycentric barycentric(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, const Eigen::Vector2d& q) {
  Eigen::Matrix2d t;
  t.col(0) = b - a;
  t.col(1) = c - a;
  const double det = t.determinant();
  if (det == 0.0) return {-1e30, -1e30, -1e30};
  const Eigen::Vector2d l = t.inverse() * (q - a);
  return {1.0 - l[0] - l[1], l[0], l[1]};
}

}  // namespace

GraphFunction graph_transform(const GraphFunction& h, const ManifoldContext& ctx) {
  if (!(ctx.sched.K < 1.0)) throw NumericalError("graph_transform: schedule is not contracting");
  const spectral::Projector& proj = *ctx.proj;
  const int npts = h.npoints();

  // Lift from the preimages of the mesh under the linearized expansion
  // (small margin so the flowed nodes straddle the mesh). The graph is a
  // set, so any parameterization of it may be flowed; pulling the sources
  // back keeps the image nodes at mesh resolution instead of e^{lambda t}
  // coarser, and the trajectories stay inside the cutoff ball.
  const Eigen::MatrixXd pullback =
      smallmat::expm(-ctx.sched.t_map * proj.reduced) * (1.0 + 0.05);

  std::vector<Eigen::VectorXd> img_coords(static_cast<std::size_t>(npts));
  std::vector<Eigen::VectorXd> img_vals(static_cast<std::size_t>(npts));
  for (int idx = 0; idx < npts; ++idx) {
    const Eigen::VectorXd c = pullback * h.coords_of(idx);
    const Eigen::VectorXd lift = proj.embed(c) + h.value_at(c);
    const Eigen::VectorXd flowed = ctx.flow->flow(lift, ctx.sched.t_map);
    const Eigen::VectorXd ci = proj.coords(flowed);
    img_coords[static_cast<std::size_t>(idx)] = ci;
    img_vals[static_cast<std::size_t>(idx)] = flowed - proj.embed(ci);
  }

  GraphFunction out = h;
  const double r = h.r_mesh;

  if (h.d == 1) {
    std::vector<int> order(static_cast<std::size_t>(npts));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return img_coords[static_cast<std::size_t>(a)][0] < img_coords[static_cast<std::size_t>(b)][0];
    });
    for (std::size_t q = 1; q < order.size(); ++q) {
      const double gap = img_coords[static_cast<std::size_t>(order[q])][0] -
                         img_coords[static_cast<std::size_t>(order[q - 1])][0];
      if (!(gap > 1e-12 * r))
        throw NumericalError("graph_transform: interpolation degeneracy (collapsed image nodes)");
    }
    const double lo = img_coords[static_cast<std::size_t>(order.front())][0];
    const double hi = img_coords[static_cast<std::size_t>(order.back())][0];
    if (lo > -r + 1e-9 * r || hi < r - 1e-9 * r)
      throw NumericalError(
          "graph_transform: flowed graph does not cover the mesh; increase t_map or shrink r_mesh");
    for (int k = 0; k < npts; ++k) {
      const double x = out.axis_coord(k);
      // bracketing image interval
      std::size_t a = 0, b = order.size() - 1;
      while (b - a > 1) {
        const std::size_t mid = (a + b) / 2;
        if (img_coords[static_cast<std::size_t>(order[mid])][0] <= x)
          a = mid;
        else
          b = mid;
      }
      const double xa = img_coords[static_cast<std::size_t>(order[a])][0];
      const double xb = img_coords[static_cast<std::size_t>(order[b])][0];
      const double th = std::clamp((x - xa) / (xb - xa), 0.0, 1.0);
      out.values[static_cast<std::size_t>(k)] =
          (1.0 - th) * img_vals[static_cast<std::size_t>(order[a])] +
          th * img_vals[static_cast<std::size_t>(order[b])];
    }
  } else {
    // triangulate the deformed tensor mesh and interpolate linearly
    const int p = h.points_per_axis;
    struct Tri {
      int a, b, c;
    };
    std::vector<Tri> tris;
    tris.reserve(static_cast<std::size_t>(2 * (p - 1) * (p - 1)));
    for (int ky = 0; ky + 1 < p; ++ky)
      for (int kx = 0; kx + 1 < p; ++kx) {
        const int i00 = ky * p + kx, i10 = ky * p + kx + 1;
        const int i01 = (ky + 1) * p + kx, i11 = (ky + 1) * p + kx + 1;
        tris.push_back({i00, i10, i11});
        tris.push_back({i00, i11, i01});
      }
    auto pt = [&](int idx) {
      return Eigen::Vector2d(img_coords[static_cast<std::size_t>(idx)][0],
                             img_coords[static_cast<std::size_t>(idx)][1]);
    };
    for (int idx = 0; idx < npts; ++idx) {
      const Eigen::VectorXd c = h.coords_of(idx);
      const Eigen::Vector2d q(c[0], c[1]);
      double best_margin = -1e30;
      Tri best{0, 0, 0};
      Barycentric best_bc{0, 0, 0};
      for (const Tri& tr : tris) {
        const Barycentric bc = barycentric(pt(tr.a), pt(tr.b), pt(tr.c), q);
        if (bc.margin() > best_margin) {
          best_margin = bc.margin();
          best = tr;
          best_bc = bc;
        }
        if (best_margin >= -1e-9) break;
      }
      if (best_margin < -1e-6)
        throw NumericalError(
            "graph_transform: flowed graph does not cover the mesh; increase t_map or shrink r_mesh");
      out.values[static_cast<std::size_t>(idx)] =
          best_bc.w0 * img_vals[static_cast<std::size_t>(best.a)] +
          best_bc.w1 * img_vals[static_cast<std::size_t>(best.b)] +
          best_bc.w2 * img_vals[static_cast<std::size_t>(best.c)];
    }
  }

  clamp_and_measure(out, ctx);
  return out;
}

double lip_distance(const GraphFunction& h2, const GraphFunction& h1, const ManifoldContext& ctx) {
  if (h2.npoints() != h1.npoints()) throw NumericalError("lip_distance: mesh mismatch");
  double worst = 0.0;
  for (int idx = 0; idx < h2.npoints(); ++idx) {
    if (idx == h2.zero_index) continue;
    const double nw = ctx.renorm->plus_norm_coords(h2.coords_of(idx));
    if (nw <= 0.0) continue;
    const double nv = ctx.renorm->minus_norm(h2.values[static_cast<std::size_t>(idx)] -
                                             h1.values[static_cast<std::size_t>(idx)]);
    worst = std::max(worst, nv / nw);
  }
  return worst;
}

namespace {

void append_graph_samples(ManifoldPatch& patch, const ManifoldContext& ctx) {
  const GraphFunction& g = patch.graph;
  const spectral::Projector& proj = *ctx.proj;
  const geometry::DomainMask& mask = ctx.op->mask;
  const int refine = std::max(1, ctx.sample_refine);
  const int pref = (g.points_per_axis - 1) * refine + 1;
  const double step = 2.0 * g.r_mesh / (pref - 1);
  auto add = [&](const Eigen::VectorXd& c) {
    const Eigen::VectorXd u = proj.embed(c) + g.value_at(c);
    const double un = norm_l2(mask.grid(), u);
    if (un > patch.delta_hat) return;
    PatchSample s;
    s.coords = c;
    s.full = geometry::extend_by_zero(u, mask);
    s.norm_l2 = un;
    patch.samples.push_back(std::move(s));
  };
  if (g.d == 1) {
    for (int k = 0; k < pref; ++k) add(Eigen::VectorXd::Constant(1, -g.r_mesh + k * step));
  } else {
    for (int ky = 0; ky < pref; ++ky)
      for (int kx = 0; kx < pref; ++kx) {
        Eigen::VectorXd c(2);
        c << -g.r_mesh + kx * step, -g.r_mesh + ky * step;
        add(c);
      }
  }
}

}  // namespace

ManifoldPatch unstable_manifold(const ManifoldContext& ctx) {
  const spectral::Projector& proj = *ctx.proj;
  if (proj.kind != spectral::SplitKind::Unstable)
    throw NumericalError("unstable_manifold: context must carry the unstable split");
  if (proj.d == 0) throw NumericalError("unstable_manifold: X+ is trivial (d = 0)");
  if (proj.d > 2)
    throw ConfigError("unstable_manifold: d = " + std::to_string(proj.d) +
                      " unsupported; the graph mesh supports d <= 2");
  require_feasible(ctx.cone);

  ManifoldPatch patch;
  patch.kind = spectral::SplitKind::Unstable;
  patch.delta1 = ctx.delta1;
  patch.delta2 = ctx.delta2;
  patch.delta_hat = ctx.delta_hat;
  patch.contraction_K = ctx.sched.K;
  patch.m0 = ctx.sched.m0;

  GraphFunction h = zero_graph(proj.d, ctx.r_mesh, ctx.mesh_points, ctx.op->size());
  double prev_dist = -1.0;
  int bad_streak = 0;
  for (int m = 1; m <= ctx.sched.m_max; ++m) {
    GraphFunction next = graph_transform(h, ctx);
    const double dist = lip_distance(next, h, ctx);
    patch.iterate_distances.push_back(dist);
    if (prev_dist > 0.0) {
      const double ratio = dist / prev_dist;
      patch.contraction_ratios.push_back(ratio);
      bad_streak = ratio >= 1.0 ? bad_streak + 1 : 0;
      if (bad_streak >= 3) {
        std::ostringstream os;
        os << "graph transform is not contracting (3 consecutive ratios >= 1; last "
           << ratio << ", K = " << ctx.sched.K << ")";
        throw NumericalError(os.str());
      }
    }
    h = std::move(next);
    patch.iterations = m;
    if (dist < ctx.sched.tol) break;
    prev_dist = dist;
  }

  patch.graph = std::move(h);
  patch.lip = patch.graph.lip;
  append_graph_samples(patch, ctx);
  return patch;
}

ShootResult stable_shoot(const ManifoldContext& ctx, const Eigen::VectorXd& v0) {
  const spectral::Projector& proj = *ctx.proj;
  if (proj.kind != spectral::SplitKind::Stable)
    throw NumericalError("stable_shoot: context must carry the stable split");
  const int d = proj.d;
  ShootResult res;
  res.coords = Eigen::VectorXd::Zero(d);

  const double vn0 = ctx.renorm->minus_norm(v0);
  if (vn0 == 0.0 || d == 0) {  // equilibrium, or X+ trivial (zero graph)
    res.exit_time = ctx.t_stab;
    res.reached_horizon = true;
    return res;
  }
  if (d > 2) throw ConfigError("stable_shoot: d > 2 unsupported");

  const double mu = ctx.cone.mu;
  const double ball = mu * vn0;  // radius of B in the X+ renormed norm

  // horizon snapped to the step grid so the final cone check can reach it
  const double dt = ctx.flow->config().dt;
  const double t_run = dt * std::max<long long>(1, std::llround(ctx.t_stab / dt));

  auto plus_norm_of = [&](const Eigen::VectorXd& c) { return ctx.renorm->plus_norm_coords(c); };
  auto project_into_ball = [&](Eigen::VectorXd c) {
    const double pn = plus_norm_of(c);
    if (pn > ball && pn > 0.0) c *= ball / pn;
    return c;
  };

  struct Score {
    double tau = -2.0;
    double viol = 1e30;
    bool better_than(const Score& o) const {
      if (tau != o.tau) return tau > o.tau;
      return viol < o.viol;
    }
  };
  auto evaluate = [&](const Eigen::VectorXd& c) {
    const Eigen::VectorXd u0 = v0 + proj.embed(c);
    const auto r = ctx.flow->run_while(
        u0, t_run, ctx.cone_stride, [&](double, const Eigen::VectorXd& u) {
          const Eigen::VectorXd cu = proj.coords(u);
          const double wn = ctx.renorm->plus_norm_coords(cu);
          const double vn = ctx.renorm->minus_norm(u - proj.embed(cu));
          if (vn == 0.0) return wn == 0.0 ? 0.0 : 1e30;
          return wn / (mu * vn);
        });
    return Score{r.kept_time, r.violation};
  };

  const double done = t_run * (1.0 - 1e-12);

  if (d == 1) {
    const double unit = plus_norm_of(Eigen::VectorXd::Ones(1));
    const double rc = ball / unit;
    double lo = -rc, hi = rc;
    Score best;
    Eigen::VectorXd best_c = Eigen::VectorXd::Zero(1);
    auto probe = [&](double x) {
      Eigen::VectorXd c = Eigen::VectorXd::Constant(1, x);
      const Score s = evaluate(c);
      if (s.better_than(best)) {
        best = s;
        best_c = c;
      }
      return s;
    };
    for (int k = 0; k <= 8; ++k) {
      probe(lo + (hi - lo) * k / 8.0);
      if (best.tau >= done) break;
    }
    if (best.tau < done) {
      lo = std::max(-rc, best_c[0] - rc / 4.0);
      hi = std::min(rc, best_c[0] + rc / 4.0);
      while (hi - lo > ctx.shoot_tol * rc && best.tau < done) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        const Score s1 = probe(m1);
        const Score s2 = probe(m2);
        if (s1.better_than(s2))
          hi = m2;
        else
          lo = m1;
      }
    }
    res.coords = project_into_ball(best_c);
    res.exit_time = best.tau;
    res.reached_horizon = best.tau >= done;
  } else {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(d);
    Score best = evaluate(c);
    double step = ball / (2.0 * plus_norm_of(Eigen::VectorXd::Unit(d, 0)));
    int evals = 1;
    while (step > ctx.shoot_tol * ball && evals < 200 && best.tau < done) {
      bool improved = false;
      for (int axis = 0; axis < d && !improved; ++axis)
        for (double sgn : {1.0, -1.0}) {
          Eigen::VectorXd cand = project_into_ball(c + sgn * step * Eigen::VectorXd::Unit(d, axis));
          const Score s = evaluate(cand);
          ++evals;
          if (s.better_than(best)) {
            best = s;
            c = cand;
            improved = true;
            break;
          }
        }
      if (!improved) step *= 0.5;
    }
    res.coords = c;
    res.exit_time = best.tau;
    res.reached_horizon = best.tau >= done;
  }

  if (!res.reached_horizon)
    throw NumericalError(
        "stable_shoot: no candidate kept the cone condition to the horizon; shrink ||v0|| "
        "(neighborhood too large)");
  return res;
}

ManifoldPatch stable_manifold(const ManifoldContext& ctx) {
  const spectral::Projector& proj = *ctx.proj;
  if (proj.kind != spectral::SplitKind::Stable)
    throw NumericalError("stable_manifold: context must carry the stable split");
  require_feasible(ctx.cone);

  ManifoldPatch patch;
  patch.kind = spectral::SplitKind::Stable;
  patch.delta1 = ctx.delta1;
  patch.delta2 = ctx.delta2;
  patch.delta_hat = ctx.delta_hat;

  const geometry::DomainMask& mask = ctx.op->mask;
  const int n = ctx.op->size();

  // pinned equilibrium sample h-(0) = 0
  {
    PatchSample s;
    s.coords = Eigen::VectorXd::Zero(proj.d);
    s.full = Eigen::VectorXd::Zero(mask.grid().nodes());
    s.norm_l2 = 0.0;
    s.direction = -1;
    patch.samples.push_back(std::move(s));
  }

  // Direction seeds are drawn on the full grid so every family member
  // projects the same fields into its own X-; member and limit patches then
  // sample matching spokes and their semidistance measures the manifold
  // perturbation, not direction mismatch.
  Rng rng(ctx.seed + 31);
  const double rho_max = 0.7 * ctx.delta_hat;
  double lip = 0.0;
  for (int dir = 0; dir < ctx.stable_directions; ++dir) {
    const Eigen::VectorXd seed_field = rng.normal_vector(mask.grid().nodes());
    Eigen::VectorXd e = proj.project_minus(geometry::restrict_to(seed_field, mask));
    const double en = norm_l2(mask.grid(), e);
    if (en == 0.0) continue;
    e /= en;
    Eigen::VectorXd prev_w;
    double prev_rho = 0.0;
    bool have_prev = false;
    for (int q = 1; q <= ctx.stable_radii; ++q) {
      const double rho = rho_max * q / ctx.stable_radii;
      const Eigen::VectorXd v0 = rho * e;
      const ShootResult shot = stable_shoot(ctx, v0);
      const Eigen::VectorXd w = proj.d > 0 ? proj.embed(shot.coords)
                                           : Eigen::VectorXd::Zero(n);
      const Eigen::VectorXd u = v0 + w;
      const double un = norm_l2(mask.grid(), u);
      if (un <= ctx.delta_hat) {
        PatchSample s;
        s.coords = shot.coords;
        s.full = geometry::extend_by_zero(u, mask);
        s.norm_l2 = un;
        s.direction = dir;
        s.radius = rho;
        patch.samples.push_back(std::move(s));
      }
      if (have_prev && proj.d > 0) {
        const double dw = ctx.renorm->plus_norm(w - prev_w);
        const double dv = ctx.renorm->minus_norm((rho - prev_rho) * e);
        if (dv > 0.0) lip = std::max(lip, dw / dv);
      }
      prev_w = w;
      prev_rho = rho;
      have_prev = true;
    }
  }
  patch.lip = lip;
  return patch;
}

}  // namespace mperturb::manifolds
