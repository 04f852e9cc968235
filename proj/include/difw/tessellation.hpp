#pragma once

#include <vector>

#include "json.hpp"

namespace difw {

struct Domain {
  double x_min = 0.0;
  double x_max = 1.0;

  double length() const { return x_max - x_min; }
};

/// Partition of a 1D domain into closed cells sharing boundary vertices.
///
/// Cells are 0-indexed: cell c spans [vertex(c), vertex(c + 1)]. A point on a
/// shared vertex belongs to the lower-indexed cell.
class Tessellation {
 public:
  /// Uniform partition of `domain` into `n_cells` cells.
  Tessellation(Domain domain, int n_cells);

  const Domain& domain() const { return domain_; }
  int n_cells() const { return static_cast<int>(vertices_.size()) - 1; }
  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_shared_vertices() const { return n_vertices() - 2; }
  const std::vector<double>& vertices() const { return vertices_; }

  double lower(int c) const { return vertices_[c]; }
  double upper(int c) const { return vertices_[c + 1]; }
  double center(int c) const { return 0.5 * (vertices_[c] + vertices_[c + 1]); }

  bool contains(double x) const { return x >= domain_.x_min && x <= domain_.x_max; }

  /// Smallest c with x in cell c. Throws OutOfDomain outside the domain.
  int cell_index(double x) const;

  /// Upper vertex of cell c for nonnegative velocity, lower vertex otherwise.
  double exit_boundary(int c, double velocity) const;

 private:
  Domain domain_;
  std::vector<double> vertices_;
  double inv_width_;
};

void to_json(nlohmann::json& j, const Tessellation& tess);
Tessellation tessellation_from_json(const nlohmann::json& j);

}  // namespace difw
