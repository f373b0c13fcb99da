#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mperturb/dynamics.hpp"
#include "mperturb/spectral.hpp"

namespace mperturb::manifolds {

/// Cone opening parameters mu < 1 < nu, the rate gamma, and the Lipschitz
/// constant they were selected for. `feasible` is false when no grid pair
/// satisfies epsilon < (beta - alpha)/(2 + nu + 1/mu); `violated` then names
/// the failing inequality.
struct ConeParams {
  double mu = 0.0;
  double nu = 0.0;
  double gamma = 0.0;
  double epsilon = 0.0;
  bool feasible = false;
  std::string violated;
};

/// Searches mu in {0.5, 0.25, 0.1}, nu in {2, 4, 10} (mu-major order, first
/// feasible pair wins) and places gamma at the midpoint of the admissible
/// interval (eps(1 + 1/mu) - beta, -eps(1 + nu) - alpha).
ConeParams select_cone_params(const dynamics::DichotomyConstants& dc, double epsilon);

/// Throws ConfigError when the params are infeasible.
void require_feasible(const ConeParams& cone);

/// Closed cone test: lambda * ||v||_{X-} <= ||w||_{X+}.
bool cone_membership(double v_norm_minus, double w_norm_plus, double lambda);

/// Lipschitz graph h : X+ -> X- sampled on a regular tensor mesh of X+
/// coordinates covering the ball of radius r_mesh (d <= 2). Values are X-
/// vectors on the active nodes; between mesh nodes the graph is piecewise
/// multilinear. h(0) = 0 is pinned exactly.
struct GraphFunction {
  int d = 1;
  int points_per_axis = 0;  // odd so the origin is a mesh node
  double r_mesh = 0.0;
  std::vector<Eigen::VectorXd> values;
  double lip = 0.0;  // measured Lipschitz constant in the renormed norms
  int zero_index = -1;

  int npoints() const;
  double axis_coord(int k) const;
  Eigen::VectorXd coords_of(int idx) const;
  Eigen::VectorXd value_at(const Eigen::VectorXd& coords) const;
};

GraphFunction zero_graph(int d, double r_mesh, int points_per_axis, int n_minus);

/// Iteration schedule of the time-t graph transform: contraction constant
/// K = nu (nu - mu)^-1 exp((alpha - beta + eps(2 + mu + 1/nu)) t) and the
/// a-priori iterate count m0 with K^m0/(1-K) * 2/nu <= tol.
struct FixedPointSchedule {
  double t_map = 0.0;
  double K = 0.0;
  int m_max = 40;
  double tol = 1e-4;
  int m0 = 0;
};

/// t_map <= 0 picks the time that makes K = 0.5.
FixedPointSchedule make_schedule(const dynamics::DichotomyConstants& dc, const ConeParams& cone,
                                 double t_map, double tol, int m_max);

/// Everything one problem instance needs to run the constructions.
struct ManifoldContext {
  const operators::EllipticOperator* op = nullptr;
  const spectral::Projector* proj = nullptr;
  const dynamics::CutoffNonlinearity* nl = nullptr;
  const dynamics::LinearPropagator* prop = nullptr;
  const dynamics::RenormEvaluator* renorm = nullptr;
  const dynamics::Semiflow* flow = nullptr;
  dynamics::DichotomyConstants dc;
  ConeParams cone;
  FixedPointSchedule sched;

  double r_mesh = 0.0;
  int mesh_points = 21;
  int sample_refine = 2;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta_hat = 0.0;

  double t_stab = 0.0;
  int cone_stride = 25;
  double shoot_tol = 2e-2;
  int stable_directions = 8;
  int stable_radii = 2;
  std::uint64_t seed = 1;
};

/// One point of a manifold patch, kept both in X+ coordinates (or direction
/// and radius for the stable side) and as the zero-extended L2(D) vector.
struct PatchSample {
  Eigen::VectorXd coords;
  Eigen::VectorXd full;
  double norm_l2 = 0.0;
  int direction = -1;  // stable patches: index of the X- direction
  double radius = 0.0;
};

struct ManifoldPatch {
  spectral::SplitKind kind = spectral::SplitKind::Unstable;
  GraphFunction graph;  // unstable side; empty mesh for stable patches
  double delta1 = 0.0, delta2 = 0.0, delta_hat = 0.0;
  double lip = 0.0;
  std::vector<PatchSample> samples;

  // diagnostics
  int iterations = 0;
  int m0 = 0;
  double contraction_K = 0.0;
  std::vector<double> iterate_distances;
  std::vector<double> contraction_ratios;
};

/// One application of the time-t graph transform: lift the mesh, flow by the
/// modified semiflow, project, reinterpolate on the original mesh (monotone
/// reindexing for d = 1, triangulated linear interpolation for d = 2), clamp
/// the Lipschitz constant to 1/nu and pin the origin.
GraphFunction graph_transform(const GraphFunction& h, const ManifoldContext& ctx);

/// Lip-distance max_{w != 0} ||h2(w) - h1(w)||_{X-} / ||w||_{X+} over the mesh.
double lip_distance(const GraphFunction& h2, const GraphFunction& h1,
                    const ManifoldContext& ctx);

ManifoldPatch unstable_manifold(const ManifoldContext& ctx);

struct ShootResult {
  Eigen::VectorXd coords;   // X+ coordinates of the exit-time maximiser
  double exit_time = 0.0;
  bool reached_horizon = false;
};

/// Cone-exit shooting: maximises over the ball ||w0||_{X+} <= mu ||v0||_{X-}
/// the time the trajectory of v0 + w0 keeps ||w(t)||_{X+} <= mu ||v(t)||_{X-}.
/// The maximiser is declared h-(v0) when the exit time reaches t_stab.
ShootResult stable_shoot(const ManifoldContext& ctx, const Eigen::VectorXd& v0);

ManifoldPatch stable_manifold(const ManifoldContext& ctx);

}  // namespace mperturb::manifolds
