#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mperturb/errors.hpp"

namespace mperturb::geometry {

/// Uniform grid of interior nodes of the common square box D.
/// Nodes sit at (x0 + i*h, y0 + j*h) for i, j = 1..m with h = side/(m+1).
/// Each node carries the mass h^2, so the grid inner product
/// h^2 * sum(u_i v_i) is the discrete L2(D) product and extension by zero
/// is exactly isometric.
struct GridSpec {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 1.0;
  int m = 63;

  double spacing() const { return side / (m + 1); }
  double cell_area() const { return spacing() * spacing(); }
  int nodes() const { return m * m; }
  // i, j in 1..m
  int index(int i, int j) const { return (j - 1) * m + (i - 1); }
  double x(int i) const { return x0 + i * spacing(); }
  double y(int j) const { return y0 + j * spacing(); }

  bool operator==(const GridSpec&) const = default;
};

GridSpec make_grid(int m, double x0 = 0.0, double y0 = 0.0, double side = 1.0);

double inner_l2(const GridSpec& grid, const Eigen::VectorXd& u, const Eigen::VectorXd& v);
double norm_l2(const GridSpec& grid, const Eigen::VectorXd& u);

/// Subset of the interior nodes of D. Inactive nodes are Dirichlet: a
/// function on the mask lives on the active nodes only and reads as its
/// extension by zero everywhere else.
class DomainMask {
public:
  DomainMask(GridSpec grid, std::vector<std::uint8_t> active, std::string label);

  const GridSpec& grid() const { return grid_; }
  const std::string& label() const { return label_; }

  bool active_full(int full_index) const { return active_[static_cast<std::size_t>(full_index)] != 0; }
  bool active_at(int i, int j) const { return active_full(grid_.index(i, j)); }
  int active_count() const { return static_cast<int>(locals_.size()); }
  double measure() const { return active_count() * grid_.cell_area(); }

  // -1 when the node is not in the mask
  int local_of_full(int full_index) const { return local_[static_cast<std::size_t>(full_index)]; }
  int full_of_local(int k) const { return locals_[static_cast<std::size_t>(k)]; }
  const std::vector<int>& active_nodes() const { return locals_; }

  bool same_set(const DomainMask& other) const;
  bool subset_of(const DomainMask& other) const;

  // Portable bitmap text format: "mask <m> <x0> <y0> <side>" header followed
  // by one 0/1 row per grid row (j = 1 first).
  void write_bitmap(std::ostream& out) const;
  static DomainMask read_bitmap(std::istream& in, std::string label);

private:
  GridSpec grid_;
  std::vector<std::uint8_t> active_;
  std::vector<int> local_;
  std::vector<int> locals_;
  std::string label_;
};

DomainMask full_mask(const GridSpec& grid, std::string label = "D");

enum class FamilyKind { Fixed, Dumbbell, Fingers, NotchedSquare };

FamilyKind family_kind_from(const std::string& name);
std::string to_string(FamilyKind kind);

struct MemberParams {
  int n = 0;
  int feature_cells = 0;  // handle width / finger width / notch depth, in cells
  int feature_count = 1;  // fingers only
  bool clamped = false;
  std::string note;
};

/// Family of perturbed domains Omega_n over one grid, with the limit Omega.
struct DomainFamily {
  FamilyKind kind = FamilyKind::Fixed;
  GridSpec grid;
  std::vector<DomainMask> members;  // members[k] is Omega_{k+1}
  std::vector<MemberParams> params;
  std::vector<DomainMask> limit_storage;  // single element; keeps member refs stable

  const DomainMask& limit() const { return limit_storage.front(); }
  int n_max() const { return static_cast<int>(members.size()); }
};

DomainFamily build_family(FamilyKind kind, int n_max, const GridSpec& grid);

Eigen::VectorXd extend_by_zero(const Eigen::VectorXd& u, const DomainMask& mask);
Eigen::VectorXd restrict_to(const Eigen::VectorXd& full, const DomainMask& mask);
/// Zero-extend from one mask and restrict to another (same grid).
Eigen::VectorXd transfer(const Eigen::VectorXd& u, const DomainMask& from, const DomainMask& to);

Eigen::VectorXd indicator(const DomainMask& mask);  // constant 1 on the mask

}  // namespace mperturb::geometry
