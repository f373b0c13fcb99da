#include <fstream>
#include <sstream>

#include "mperturb/lab.hpp"

namespace mperturb::lab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "auto") return 0.0;
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  if (v == "auto") return 0;
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  ProblemConfig& p = cfg.problem;
  if (key == "grid.m") p.grid.m = to_int(key, value);
  else if (key == "grid.x0") p.grid.x0 = to_double(key, value);
  else if (key == "grid.y0") p.grid.y0 = to_double(key, value);
  else if (key == "grid.side") p.grid.side = to_double(key, value);
  else if (key == "coeffs.preset") p.coeff_preset = value;
  else if (key == "coeffs.alpha0") p.alpha0 = to_double(key, value);
  else if (key == "coeffs.a11") p.a11 = to_double(key, value);
  else if (key == "coeffs.a22") p.a22 = to_double(key, value);
  else if (key == "coeffs.a12") p.a12 = to_double(key, value);
  else if (key == "coeffs.drift_a1") p.drift_a1 = to_double(key, value);
  else if (key == "coeffs.drift_a2") p.drift_a2 = to_double(key, value);
  else if (key == "coeffs.adv_b1") p.adv_b1 = to_double(key, value);
  else if (key == "coeffs.adv_b2") p.adv_b2 = to_double(key, value);
  else if (key == "coeffs.c0") p.c0 = to_double(key, value);
  else if (key == "coeffs.grad_x") p.coeff_grad_x = to_double(key, value);
  else if (key == "coeffs.grad_y") p.coeff_grad_y = to_double(key, value);
  else if (key == "coeffs.trig_amp") p.coeff_trig_amp = to_double(key, value);
  else if (key == "nonlinearity.preset") p.nonlin = dynamics::nonlin_preset_from(value);
  else if (key == "nonlinearity.amplitude") p.amplitude = to_double(key, value);
  else if (key == "nonlinearity.delta") p.delta = to_double(key, value);
  else if (key == "nonlinearity.eta") p.eta = to_double(key, value);
  else if (key == "nonlinearity.samples") p.lipschitz_samples = to_int(key, value);
  else if (key == "family.kind") cfg.family = geometry::family_kind_from(value);
  else if (key == "family.nmax") cfg.n_max = to_int(key, value);
  else if (key == "split.kind") {
    if (value == "stable") p.split = spectral::SplitKind::Stable;
    else if (value == "unstable") p.split = spectral::SplitKind::Unstable;
    else throw ConfigError("split.kind must be 'stable' or 'unstable', got '" + value + "'");
  }
  else if (key == "manifold.r_mesh") p.r_mesh = to_double(key, value);
  else if (key == "manifold.mesh_points") p.mesh_points = to_int(key, value);
  else if (key == "manifold.tol") p.tol = to_double(key, value);
  else if (key == "manifold.m_max") p.m_max = to_int(key, value);
  else if (key == "manifold.t_map") p.t_map = to_double(key, value);
  else if (key == "manifold.t_stab") p.t_stab = to_double(key, value);
  else if (key == "manifold.sample_refine") p.sample_refine = to_int(key, value);
  else if (key == "manifold.directions") p.stable_directions = to_int(key, value);
  else if (key == "manifold.radial_points") p.stable_radii = to_int(key, value);
  else if (key == "manifold.cone_stride") p.cone_stride = to_int(key, value);
  else if (key == "manifold.shoot_tol") p.shoot_tol = to_double(key, value);
  else if (key == "manifold.delta1") p.delta1 = to_double(key, value);
  else if (key == "manifold.delta2") p.delta2 = to_double(key, value);
  else if (key == "manifold.delta_hat") p.delta_hat = to_double(key, value);
  else if (key == "time.scheme") p.scheme = dynamics::scheme_from(value);
  else if (key == "time.dt") p.dt = to_double(key, value);
  else if (key == "time.t_horizon") p.t_horizon = to_double(key, value);
  else if (key == "norms.dt0") p.norm_opts.dt0 = to_double(key, value);
  else if (key == "norms.steps_per_level") p.norm_opts.steps_per_level = to_int(key, value);
  else if (key == "norms.decay_target") p.norm_opts.decay_target = to_double(key, value);
  else if (key == "norms.t_max") p.norm_opts.t_max = to_double(key, value);
  else if (key == "run.seed") p.seed = to_u64(key, value);
  else if (key == "run.threads") p.threads = to_int(key, value);
  else if (key == "run.out") cfg.out_dir = value;
  else if (key == "run.export_matrix") p.export_matrix = to_int(key, value) != 0;
  else if (key == "run.fit_samples") p.fit_samples = to_int(key, value);
  else if (key == "run.eig_k0") p.eig_k0 = to_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void validate_static(const ExperimentConfig& cfg) {
  const ProblemConfig& p = cfg.problem;
  if (p.grid.m < 3) throw ConfigError("grid.m must be at least 3");
  if (!(p.grid.side > 0.0)) throw ConfigError("grid.side must be positive");
  if (!(p.alpha0 > 0.0)) throw ConfigError("coeffs.alpha0 must be positive");
  if (!(p.delta > 0.0)) throw ConfigError("nonlinearity.delta must be positive");
  if (p.eta < 0.0) throw ConfigError("nonlinearity.eta must be nonnegative (or auto)");
  if (cfg.n_max < 1) throw ConfigError("family.nmax must be at least 1");
  if (p.mesh_points < 3 || p.mesh_points % 2 == 0)
    throw ConfigError("manifold.mesh_points must be odd and at least 3");
  if (!(p.tol > 0.0)) throw ConfigError("manifold.tol must be positive");
  if (p.m_max < 1) throw ConfigError("manifold.m_max must be at least 1");
  if (p.stable_directions < 1) throw ConfigError("manifold.directions must be at least 1");
  if (p.stable_radii < 1) throw ConfigError("manifold.radial_points must be at least 1");
  if (p.lipschitz_samples < 3) throw ConfigError("nonlinearity.samples must be at least 3");
  if (p.threads < 0) throw ConfigError("run.threads must be nonnegative");
}

}  // namespace

std::string default_config_text() {
  return R"(# mperturb experiment configuration (key = value; 'auto' derives a default)
grid.m = 63
grid.x0 = 0.0
grid.y0 = 0.0
grid.side = 1.0

coeffs.preset = constant
coeffs.alpha0 = 1.0
coeffs.a11 = 1.0
coeffs.a22 = 1.0
coeffs.a12 = 0.0
coeffs.drift_a1 = 0.0
coeffs.drift_a2 = 0.0
coeffs.adv_b1 = 0.0
coeffs.adv_b2 = 0.0
coeffs.c0 = -45.0

nonlinearity.preset = cubic
nonlinearity.amplitude = 25.0
nonlinearity.delta = 0.01
nonlinearity.eta = auto
nonlinearity.samples = 30

family.kind = dumbbell
family.nmax = 4

split.kind = unstable

manifold.r_mesh = auto
manifold.mesh_points = 21
manifold.tol = 1e-8
manifold.m_max = 40
manifold.t_map = auto
manifold.t_stab = auto
manifold.sample_refine = 2
manifold.directions = 16
manifold.radial_points = 2
manifold.cone_stride = 40
manifold.shoot_tol = 2e-4
manifold.delta1 = auto
manifold.delta2 = auto
manifold.delta_hat = auto

time.scheme = cn-ab
time.dt = auto
time.t_horizon = 1.0

norms.dt0 = 1e-3
norms.steps_per_level = 4
norms.decay_target = 1e-3
norms.t_max = auto

run.seed = 1234
run.threads = 0
run.out = runs
run.export_matrix = 0
run.fit_samples = 100
run.eig_k0 = 8
)";
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    apply_key(cfg, key, value);
    cfg.echo.emplace_back(key, value);
  }
  validate_static(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ExperimentConfig default_config() { return parse_config_text(default_config_text()); }

std::string config_schema() {
  return R"(Configuration keys (flat 'key = value' lines, '#' comments, 'auto' = derived default)

grid.m                 interior nodes per axis of the common box D (>= 3)
grid.x0, grid.y0       lower-left corner of D
grid.side              side length of D

coeffs.preset          constant | affine | trigonometric
coeffs.alpha0          ellipticity constant (must bound the diffusion tensor)
coeffs.a11/.a22/.a12   diffusion tensor entries (base values)
coeffs.drift_a1/_a2    divergence-form drift a_i
coeffs.adv_b1/_b2      advection b_i
coeffs.c0              potential (base value)
coeffs.grad_x/.grad_y  affine preset: slope added to a11, a22, c0
coeffs.trig_amp        trigonometric preset: modulation amplitude

nonlinearity.preset    zero | cubic | saturating | sine
nonlinearity.amplitude source amplitude c
nonlinearity.delta     cutoff radius delta
nonlinearity.eta       Lipschitz budget (auto: 4.5 * measured epsilon)
nonlinearity.samples   sample pairs per scale level in the Lipschitz estimate

family.kind            fixed | dumbbell | fingers | notched-square
family.nmax            number of perturbed members

split.kind             stable (X- = X^s) | unstable (X- = X^cs)

manifold.r_mesh        graph mesh radius in X+ coordinates (auto: 0.45 * delta)
manifold.mesh_points   mesh points per axis (odd)
manifold.tol           Lip-distance stopping tolerance of the graph transform
manifold.m_max         iteration cap
manifold.t_map         transform time (auto: contraction constant K = 0.5)
manifold.t_stab        shooting horizon (auto: 10 / sigma)
manifold.sample_refine patch sampling density (subdivisions per mesh cell)
manifold.directions    stable patch: number of X- directions
manifold.radial_points stable patch: radii per direction
manifold.cone_stride   steps between cone checks in the shooting
manifold.shoot_tol     relative search tolerance of the shooting
manifold.delta1/2      product neighborhood radii (auto: from r_mesh, ordered by kind)
manifold.delta_hat     metric ball radius (auto: from delta1/2 and projector norms)

time.scheme            cn-ab | exp-euler
time.dt                time step (auto: min(1e-3, 0.1/|lambda_max|))
time.t_horizon         horizon of diagnostic trajectory dumps

norms.dt0              first substep of the weighted-curve scan
norms.steps_per_level  substeps before the scan step doubles
norms.decay_target     truncation certificate level
norms.t_max            scan horizon (auto: from the dichotomy constants)

run.seed               master seed (all randomness derives from it)
run.threads            worker cap (0 = hardware)
run.out                output directory
run.export_matrix      1 = export the limit operator in coordinate format
run.fit_samples        random vectors for the M1/M2 fits
run.eig_k0             initial eigenvalue count of the adaptive solver
)";
}

}  // namespace mperturb::lab
