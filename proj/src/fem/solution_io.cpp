#include "ces/fem.hpp"

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>

namespace ces::fem {

void write_solution(std::ostream& os, const FemSolution& solution) {
  geometry::write_mesh(os, *solution.mesh);
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int v = 0; v < solution.mesh->num_vertices(); ++v)
    os << solution.displacement[2 * v] << ' ' << solution.displacement[2 * v + 1] << '\n';
}

FemSolution read_solution(std::istream& is) {
  auto mesh = std::make_shared<Mesh>(geometry::read_mesh(is));
  FemSolution sol;
  sol.displacement.resize(2 * mesh->num_vertices());
  for (int v = 0; v < mesh->num_vertices(); ++v)
    if (!(is >> sol.displacement[2 * v] >> sol.displacement[2 * v + 1]))
      throw std::runtime_error("solution: bad displacement line " + std::to_string(v));
  sol.mesh = std::move(mesh);
  return sol;
}

}  // namespace ces::fem
