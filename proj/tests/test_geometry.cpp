#include <doctest.h>

#include <sstream>

#include "mperturb/geometry.hpp"
#include "mperturb/rng.hpp"

using namespace mperturb;
using namespace mperturb::geometry;

namespace {

// cell-counting oracle: active nodes of a member in a gap column, i.e. a
// column where the limit (lobes only) has no active nodes
int handle_width_cells(const DomainMask& member, const DomainMask& limit) {
  const GridSpec& g = member.grid();
  for (int i = 1; i <= g.m; ++i) {
    bool limit_empty = true;
    for (int j = 1; j <= g.m && limit_empty; ++j) limit_empty = !limit.active_at(i, j);
    if (!limit_empty) continue;
    int count = 0;
    for (int j = 1; j <= g.m; ++j) count += member.active_at(i, j) ? 1 : 0;
    return count;
  }
  return -1;
}

}  // namespace

TEST_CASE("fixed family members are identical to the limit") {
  const GridSpec grid = make_grid(31);
  const DomainFamily fam = build_family(FamilyKind::Fixed, 3, grid);
  REQUIRE(fam.n_max() == 3);
  for (const DomainMask& m : fam.members) CHECK(m.same_set(fam.limit()));
}

TEST_CASE("dumbbell m=63: handle widths 16,8,4,2 and strictly decreasing measure") {
  const DomainFamily fam = build_family(FamilyKind::Dumbbell, 4, make_grid(63));
  const int expected[4] = {16, 8, 4, 2};
  for (int n = 0; n < 4; ++n) {
    CHECK(handle_width_cells(fam.members[n], fam.limit()) == expected[n]);
    CHECK(fam.params[n].feature_cells == expected[n]);
    CHECK_FALSE(fam.params[n].clamped);
  }
  for (int n = 0; n + 1 < 4; ++n) {
    CHECK(fam.members[n + 1].measure() < fam.members[n].measure());
    CHECK(fam.members[n + 1].subset_of(fam.members[n]));  // nested decreasing
  }
  CHECK(fam.limit().subset_of(fam.members[3]));
}

TEST_CASE("fingers m=63: counts 2,4,8, widths 8,4,2, constant added measure") {
  const DomainFamily fam = build_family(FamilyKind::Fingers, 3, make_grid(63));
  const int counts[3] = {2, 4, 8}, widths[3] = {8, 4, 2};
  const double h2 = fam.grid.cell_area();
  const int added0 = fam.members[0].active_count() - fam.limit().active_count();
  for (int n = 0; n < 3; ++n) {
    CHECK(fam.params[n].feature_count == counts[n]);
    CHECK(fam.params[n].feature_cells == widths[n]);
    const int added = fam.members[n].active_count() - fam.limit().active_count();
    CHECK(added == added0);  // |Omega_n \ Omega| constant
    CHECK(fam.members[n].measure() - fam.limit().measure() ==
          doctest::Approx(added0 * h2).epsilon(1e-15));
    CHECK(fam.limit().subset_of(fam.members[n]));

    // run-length oracle on the first finger row: `counts` runs of length `widths`
    const GridSpec& g = fam.grid;
    int first_finger_row = -1;
    for (int j = 1; j <= g.m && first_finger_row < 0; ++j) {
      bool limit_row = fam.limit().active_at(1, j);
      if (!limit_row) first_finger_row = j;
    }
    int runs = 0, run_len = 0;
    bool prev = false;
    for (int i = 1; i <= g.m; ++i) {
      const bool act = fam.members[n].active_at(i, first_finger_row);
      if (act && !prev) ++runs;
      if (act) ++run_len;
      prev = act;
    }
    CHECK(runs == counts[n]);
    CHECK(run_len == counts[n] * widths[n]);
  }
}

TEST_CASE("notched-square members grow toward the full square") {
  const DomainFamily fam = build_family(FamilyKind::NotchedSquare, 4, make_grid(63));
  CHECK(fam.limit().same_set(full_mask(make_grid(63))));
  for (int n = 0; n + 1 < 4; ++n) {
    CHECK(fam.members[n].subset_of(fam.members[n + 1]));
    CHECK(fam.members[n].measure() <= fam.members[n + 1].measure());
  }
  for (const auto& m : fam.members) CHECK(m.subset_of(fam.limit()));
}

TEST_CASE("degenerate members clamp at one cell with a warning") {
  const DomainFamily fam = build_family(FamilyKind::Dumbbell, 6, make_grid(31));
  // base width 8 -> 8,4,2,1, then clamped
  CHECK(fam.params[3].feature_cells == 1);
  CHECK_FALSE(fam.params[3].clamped);
  CHECK(fam.params[4].feature_cells == 1);
  CHECK(fam.params[4].clamped);
  CHECK_FALSE(fam.params[4].note.empty());
}

TEST_CASE("unknown family kind errors") {
  CHECK_THROWS_AS((void)family_kind_from("pretzel"), ConfigError);
}

TEST_CASE("extend by zero: trivial cases and exact isometry") {
  const GridSpec grid = make_grid(31);
  const DomainFamily fam = build_family(FamilyKind::Dumbbell, 3, grid);
  const DomainMask& mask = fam.members[1];

  CHECK(extend_by_zero(Eigen::VectorXd::Zero(mask.active_count()), mask).norm() == 0.0);

  const DomainMask full = full_mask(grid);
  Rng rng(3);
  const Eigen::VectorXd u_full = rng.normal_vector(full.active_count());
  CHECK(extend_by_zero(u_full, full) == u_full);  // identity up to index layout

  const Eigen::VectorXd ind = extend_by_zero(indicator(mask), mask);
  CHECK(inner_l2(grid, ind, ind) == doctest::Approx(mask.measure()).epsilon(1e-14));

  // round trip + isometry over every family member
  for (const DomainMask& m : fam.members) {
    const Eigen::VectorXd u = rng.normal_vector(m.active_count());
    const Eigen::VectorXd full_u = extend_by_zero(u, m);
    CHECK(restrict_to(full_u, m) == u);
    CHECK(norm_l2(grid, full_u) == norm_l2(grid, u));
  }

  CHECK_THROWS_AS((void)extend_by_zero(Eigen::VectorXd::Zero(3), mask), NumericalError);
}

TEST_CASE("restrict: indicator transfers and the measure identity") {
  const GridSpec grid = make_grid(63);
  const DomainFamily fam = build_family(FamilyKind::Fingers, 2, grid);
  const DomainMask& big = fam.members[0];   // Omega_n contains Omega
  const DomainMask& small = fam.limit();

  const Eigen::VectorXd one_full = Eigen::VectorXd::Ones(grid.nodes());
  CHECK(restrict_to(one_full, small) == indicator(small));

  // restrict_to(1|Omega_n, Omega) equals 1|Omega ...
  CHECK(transfer(indicator(big), big, small) == indicator(small));
  // ... while the squared L2(D) distance of the indicators is the measure gap
  const Eigen::VectorXd diff =
      extend_by_zero(indicator(big), big) - extend_by_zero(indicator(small), small);
  const double gap_sq = inner_l2(grid, diff, diff);
  CHECK(gap_sq == doctest::Approx(big.measure() - small.measure()).epsilon(1e-14));
}

TEST_CASE("measure: full grid and member cell counts") {
  const GridSpec grid = make_grid(31);
  const double frac = 31.0 / 32.0;
  CHECK(full_mask(grid).measure() == doctest::Approx(frac * frac).epsilon(1e-15));

  const DomainFamily fam = build_family(FamilyKind::Dumbbell, 2, make_grid(63));
  int count = 0;
  for (int p = 0; p < fam.grid.nodes(); ++p) count += fam.members[1].active_full(p) ? 1 : 0;
  CHECK(fam.members[1].measure() == doctest::Approx(count * fam.grid.cell_area()).epsilon(1e-15));
}

TEST_CASE("mask bitmap round trip") {
  const DomainFamily fam = build_family(FamilyKind::Fingers, 2, make_grid(31));
  for (const DomainMask& m : {fam.members[1], fam.limit()}) {
    std::stringstream io;
    m.write_bitmap(io);
    const DomainMask back = DomainMask::read_bitmap(io, "copy");
    CHECK(back.same_set(m));
  }
}
