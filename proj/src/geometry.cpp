#include "mperturb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mperturb/kernels.hpp"

namespace mperturb::geometry {

GridSpec make_grid(int m, double x0, double y0, double side) {
  if (m < 3) throw ConfigError("grid.m must be at least 3, got " + std::to_string(m));
  if (!(side > 0.0)) throw ConfigError("grid box side must be positive");
  return GridSpec{x0, y0, side, m};
}

double inner_l2(const GridSpec& grid, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw NumericalError("inner_l2: size mismatch");
  return grid.cell_area() *
         kernels::dot({u.data(), static_cast<std::size_t>(u.size())},
                      {v.data(), static_cast<std::size_t>(v.size())});
}

double norm_l2(const GridSpec& grid, const Eigen::VectorXd& u) {
  return std::sqrt(std::max(0.0, inner_l2(grid, u, u)));
}

DomainMask::DomainMask(GridSpec grid, std::vector<std::uint8_t> active, std::string label)
    : grid_(grid), active_(std::move(active)), label_(std::move(label)) {
  if (static_cast<int>(active_.size()) != grid_.nodes())
    throw ConfigError("mask '" + label_ + "': flag count does not match grid");
  local_.assign(active_.size(), -1);
  for (int p = 0; p < grid_.nodes(); ++p) {
    if (active_[static_cast<std::size_t>(p)]) {
      local_[static_cast<std::size_t>(p)] = static_cast<int>(locals_.size());
      locals_.push_back(p);
    }
  }
  if (locals_.empty()) throw ConfigError("mask '" + label_ + "' has no active nodes");
}

bool DomainMask::same_set(const DomainMask& other) const {
  return grid_ == other.grid_ && active_ == other.active_;
}

bool DomainMask::subset_of(const DomainMask& other) const {
  if (!(grid_ == other.grid_)) return false;
  for (int p : locals_)
    if (!other.active_full(p)) return false;
  return true;
}

void DomainMask::write_bitmap(std::ostream& out) const {
  out << "mask " << grid_.m << " " << grid_.x0 << " " << grid_.y0 << " " << grid_.side << "\n";
  for (int j = 1; j <= grid_.m; ++j) {
    for (int i = 1; i <= grid_.m; ++i) out << (active_at(i, j) ? '1' : '0');
    out << "\n";
  }
}

DomainMask DomainMask::read_bitmap(std::istream& in, std::string label) {
  std::string tag;
  int m = 0;
  double x0 = 0, y0 = 0, side = 0;
  in >> tag >> m >> x0 >> y0 >> side;
  if (!in || tag != "mask") throw ConfigError("bad mask bitmap header");
  GridSpec grid = make_grid(m, x0, y0, side);
  std::vector<std::uint8_t> active(static_cast<std::size_t>(grid.nodes()), 0);
  std::string row;
  for (int j = 1; j <= m; ++j) {
    in >> row;
    if (!in || static_cast<int>(row.size()) != m)
      throw ConfigError("bad mask bitmap row " + std::to_string(j));
    for (int i = 1; i <= m; ++i)
      active[static_cast<std::size_t>(grid.index(i, j))] = row[static_cast<std::size_t>(i - 1)] == '1';
  }
  return DomainMask(grid, std::move(active), std::move(label));
}

DomainMask full_mask(const GridSpec& grid, std::string label) {
  return DomainMask(grid, std::vector<std::uint8_t>(static_cast<std::size_t>(grid.nodes()), 1),
                    std::move(label));
}

FamilyKind family_kind_from(const std::string& name) {
  if (name == "fixed") return FamilyKind::Fixed;
  if (name == "dumbbell") return FamilyKind::Dumbbell;
  if (name == "fingers") return FamilyKind::Fingers;
  if (name == "notched-square") return FamilyKind::NotchedSquare;
  throw ConfigError("unknown family kind '" + name + "'");
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Fixed: return "fixed";
    case FamilyKind::Dumbbell: return "dumbbell";
    case FamilyKind::Fingers: return "fingers";
    case FamilyKind::NotchedSquare: return "notched-square";
  }
  return "?";
}

namespace {

int fraction_index(int m, int num, int den) {
  return static_cast<int>(std::lround(static_cast<double>(num) * (m + 1) / den));
}

struct DumbbellLayout {
  int left_end;     // last column of the left lobe
  int right_begin;  // first column of the right lobe
  int center_row;
};

// Lobes are intentionally unequal so the limit problem has a simple lowest
// eigenvalue (the symmetric dumbbell would make it double).
DumbbellLayout dumbbell_layout(const GridSpec& grid) {
  DumbbellLayout lay{};
  lay.left_end = fraction_index(grid.m, 9, 16) - 1;
  lay.right_begin = fraction_index(grid.m, 11, 16) + 1;
  lay.center_row = (grid.m + 1) / 2;
  if (lay.left_end < 1 || lay.right_begin > grid.m || lay.left_end + 1 >= lay.right_begin)
    throw ConfigError("grid too coarse for the dumbbell family (m=" + std::to_string(grid.m) + ")");
  return lay;
}

std::vector<std::uint8_t> dumbbell_flags(const GridSpec& grid, const DumbbellLayout& lay,
                                         int handle_width) {
  std::vector<std::uint8_t> f(static_cast<std::size_t>(grid.nodes()), 0);
  for (int j = 1; j <= grid.m; ++j)
    for (int i = 1; i <= grid.m; ++i)
      if (i <= lay.left_end || i >= lay.right_begin) f[static_cast<std::size_t>(grid.index(i, j))] = 1;
  if (handle_width > 0) {
    const int lo = lay.center_row - handle_width / 2 + 1;
    const int hi = lo + handle_width - 1;
    for (int j = std::max(1, lo); j <= std::min(grid.m, hi); ++j)
      for (int i = lay.left_end + 1; i < lay.right_begin; ++i)
        f[static_cast<std::size_t>(grid.index(i, j))] = 1;
  }
  return f;
}

struct FingersLayout {
  int base_top;      // last row of the limit rectangle
  int finger_top;    // last row reached by the fingers
  int base_width;    // width of the widest member's fingers, in cells
};

FingersLayout fingers_layout(const GridSpec& grid) {
  FingersLayout lay{};
  lay.base_top = fraction_index(grid.m, 3, 4) - 1;
  const int height = std::max(1, fraction_index(grid.m, 1, 8));
  lay.finger_top = lay.base_top + height;
  lay.base_width = std::max(1, fraction_index(grid.m, 1, 4));
  if (lay.base_top < 1 || lay.finger_top > grid.m)
    throw ConfigError("grid too coarse for the fingers family (m=" + std::to_string(grid.m) + ")");
  return lay;
}

std::vector<std::uint8_t> fingers_flags(const GridSpec& grid, const FingersLayout& lay, int count,
                                        int width) {
  std::vector<std::uint8_t> f(static_cast<std::size_t>(grid.nodes()), 0);
  for (int j = 1; j <= lay.base_top; ++j)
    for (int i = 1; i <= grid.m; ++i) f[static_cast<std::size_t>(grid.index(i, j))] = 1;
  for (int k = 0; k < count; ++k) {
    const int slot_lo = (k * grid.m) / count + 1;
    const int slot_hi = ((k + 1) * grid.m) / count;
    const int start = slot_lo + std::max(0, (slot_hi - slot_lo + 1 - width) / 2);
    for (int j = lay.base_top + 1; j <= lay.finger_top; ++j)
      for (int i = start; i < start + width && i <= slot_hi; ++i)
        f[static_cast<std::size_t>(grid.index(i, j))] = 1;
  }
  return f;
}

std::vector<std::uint8_t> notched_flags(const GridSpec& grid, int depth) {
  std::vector<std::uint8_t> f(static_cast<std::size_t>(grid.nodes()), 1);
  const int jc = (grid.m + 1) / 2;
  const int half = std::max(1, fraction_index(grid.m, 1, 4));
  const int lo = std::max(1, jc - half + 1);
  const int hi = std::min(grid.m, jc + half);
  for (int j = lo; j <= hi; ++j)
    for (int i = grid.m - depth + 1; i <= grid.m; ++i)
      f[static_cast<std::size_t>(grid.index(i, j))] = 0;
  return f;
}

}  // namespace

DomainFamily build_family(FamilyKind kind, int n_max, const GridSpec& grid) {
  if (n_max < 1) throw ConfigError("family N_max must be at least 1");
  DomainFamily family;
  family.kind = kind;
  family.grid = grid;

  auto label = [&](int n) { return to_string(kind) + "_" + std::to_string(n); };

  switch (kind) {
    case FamilyKind::Fixed: {
      family.limit_storage.push_back(full_mask(grid, to_string(kind) + "_limit"));
      for (int n = 1; n <= n_max; ++n) {
        family.members.push_back(full_mask(grid, label(n)));
        family.params.push_back(MemberParams{n, grid.m, 1, false, ""});
      }
      break;
    }
    case FamilyKind::Dumbbell: {
      const DumbbellLayout lay = dumbbell_layout(grid);
      const int base = std::max(1, fraction_index(grid.m, 1, 4));
      family.limit_storage.emplace_back(grid, dumbbell_flags(grid, lay, 0),
                                        to_string(kind) + "_limit");
      for (int n = 1; n <= n_max; ++n) {
        int w = n - 1 < 30 ? base >> (n - 1) : 0;
        MemberParams p{n, w, 1, false, ""};
        if (w < 1) {
          p.feature_cells = w = 1;
          p.clamped = true;
          p.note = "handle clamped to one cell";
        }
        family.members.emplace_back(grid, dumbbell_flags(grid, lay, w), label(n));
        family.params.push_back(p);
      }
      break;
    }
    case FamilyKind::Fingers: {
      const FingersLayout lay = fingers_layout(grid);
      family.limit_storage.emplace_back(grid, fingers_flags(grid, lay, 0, 0),
                                        to_string(kind) + "_limit");
      for (int n = 1; n <= n_max; ++n) {
        const int count = 1 << n;
        int w = n < 30 ? lay.base_width >> n : 0;
        MemberParams p{n, w, count, false, ""};
        if (w < 1) {
          p.feature_cells = w = 1;
          p.clamped = true;
          p.note = "finger width clamped to one cell; added measure no longer constant";
        }
        if (count > grid.m) throw ConfigError("grid too coarse for fingers member " + std::to_string(n));
        family.members.emplace_back(grid, fingers_flags(grid, lay, count, w), label(n));
        family.params.push_back(p);
      }
      break;
    }
    case FamilyKind::NotchedSquare: {
      const int base = std::max(1, fraction_index(grid.m, 1, 4));
      family.limit_storage.push_back(full_mask(grid, to_string(kind) + "_limit"));
      for (int n = 1; n <= n_max; ++n) {
        int depth = std::max(1, base / n);
        MemberParams p{n, depth, 1, base / n < 1, base / n < 1 ? "notch clamped to one cell" : ""};
        family.members.emplace_back(grid, notched_flags(grid, depth), label(n));
        family.params.push_back(p);
      }
      break;
    }
  }
  return family;
}

Eigen::VectorXd extend_by_zero(const Eigen::VectorXd& u, const DomainMask& mask) {
  if (u.size() != mask.active_count())
    throw NumericalError("extend_by_zero: vector length " + std::to_string(u.size()) +
                         " != active node count " + std::to_string(mask.active_count()));
  Eigen::VectorXd full = Eigen::VectorXd::Zero(mask.grid().nodes());
  const auto& nodes = mask.active_nodes();
  for (int k = 0; k < mask.active_count(); ++k) full[nodes[static_cast<std::size_t>(k)]] = u[k];
  return full;
}

Eigen::VectorXd restrict_to(const Eigen::VectorXd& full, const DomainMask& mask) {
  if (full.size() != mask.grid().nodes())
    throw NumericalError("restrict_to: expected a full-grid vector");
  Eigen::VectorXd u(mask.active_count());
  const auto& nodes = mask.active_nodes();
  for (int k = 0; k < mask.active_count(); ++k) u[k] = full[nodes[static_cast<std::size_t>(k)]];
  return u;
}

Eigen::VectorXd transfer(const Eigen::VectorXd& u, const DomainMask& from, const DomainMask& to) {
  if (!(from.grid() == to.grid())) throw NumericalError("transfer: grids differ");
  return restrict_to(extend_by_zero(u, from), to);
}

Eigen::VectorXd indicator(const DomainMask& mask) {
  return Eigen::VectorXd::Ones(mask.active_count());
}

}  // namespace mperturb::geometry
