#include "difw/tessellation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "difw/error.hpp"

namespace difw {

Tessellation::Tessellation(Domain domain, int n_cells) : domain_(domain) {
  if (n_cells < 1) {
    throw InvalidArgument("tessellation needs at least one cell, got " + std::to_string(n_cells));
  }
  if (!(domain.x_min < domain.x_max)) {
    throw InvalidArgument("tessellation domain must satisfy x_min < x_max");
  }
  vertices_.resize(n_cells + 1);
  const double width = domain.length() / n_cells;
  for (int i = 0; i <= n_cells; ++i) {
    vertices_[i] = domain.x_min + i * width;
  }
  vertices_.back() = domain.x_max;
  inv_width_ = n_cells / domain.length();
}

int Tessellation::cell_index(double x) const {
  if (!contains(x)) {
    throw OutOfDomain("point " + std::to_string(x) + " outside domain [" +
                      std::to_string(domain_.x_min) + ", " + std::to_string(domain_.x_max) + "]");
  }
  const int last = n_cells() - 1;
  int c = static_cast<int>((x - domain_.x_min) * inv_width_);
  c = std::clamp(c, 0, last);
  // Reconcile the arithmetic guess with the stored vertices (min rule).
  while (c > 0 && x <= vertices_[c]) --c;
  while (c < last && x > vertices_[c + 1]) ++c;
  return c;
}

double Tessellation::exit_boundary(int c, double velocity) const {
  if (c < 0 || c >= n_cells()) {
    throw InvalidArgument("cell index " + std::to_string(c) + " out of range");
  }
  return velocity >= 0.0 ? upper(c) : lower(c);
}

void to_json(nlohmann::json& j, const Tessellation& tess) {
  j = nlohmann::json{{"x_min", tess.domain().x_min},
                     {"x_max", tess.domain().x_max},
                     {"n_cells", tess.n_cells()}};
}

Tessellation tessellation_from_json(const nlohmann::json& j) {
  Domain domain{j.value("x_min", 0.0), j.value("x_max", 1.0)};
  return Tessellation(domain, j.at("n_cells").get<int>());
}

}  // namespace difw
