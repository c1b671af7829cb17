#include "ces/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace ces::geometry {

using Eigen::Vector2d;

double Mesh::signed_area(int t) const {
  const auto& tri = triangles[t];
  const Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
  const Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
  return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
}

double Mesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < num_triangles(); ++t) a += signed_area(t);
  return a;
}

double Mesh::max_edge_length() const {
  double longest = 0.0;
  for (const auto& tri : triangles)
    for (int k = 0; k < 3; ++k)
      longest = std::max(longest, (vertices[tri[k]] - vertices[tri[(k + 1) % 3]]).norm());
  return longest;
}

std::vector<int> outer_boundary_vertices(const Mesh& mesh) {
  std::vector<int> out;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (mesh.on_outer_boundary(v)) out.push_back(v);
  return out;
}

PoreGrid PoreGrid::uniform(int cols, int rows, const PoreShape& shape) {
  PoreGrid g;
  g.cols = cols;
  g.rows = rows;
  g.shapes.assign(static_cast<std::size_t>(cols) * rows, shape);
  return g;
}

double target_element_size(double cell_side, int min_mesh_resolution) {
  return cell_side / min_mesh_resolution;
}

namespace {

double cross(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

double orient(const Vector2d& a, const Vector2d& b, const Vector2d& c) { return cross(b - a, c - a); }

// > 0 when d lies strictly inside the circumcircle of counter-clockwise (a, b, c).
double incircle(const Vector2d& a, const Vector2d& b, const Vector2d& c, const Vector2d& d) {
  const Vector2d ad = a - d, bd = b - d, cd = c - d;
  const double a2 = ad.squaredNorm(), b2 = bd.squaredNorm(), c2 = cd.squaredNorm();
  return ad.x() * (bd.y() * c2 - b2 * cd.y()) - ad.y() * (bd.x() * c2 - b2 * cd.x()) +
         a2 * (bd.x() * cd.y() - bd.y() * cd.x());
}

double min_angle(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
  auto angle = [](const Vector2d& p, const Vector2d& q, const Vector2d& r) {
    const Vector2d u = q - p, v = r - p;
    return std::atan2(std::abs(cross(u, v)), u.dot(v));
  };
  return std::min({angle(a, b, c), angle(b, c, a), angle(c, a, b)});
}

std::pair<int, int> edge_key(int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

// Vertex of a single-cell patch in coordinates relative to the cell centre. Lattice
// vertices carry their cell-local lattice indices in [0, m].
struct LocalVertex {
  Vector2d p;
  int li = -1, lj = -1;
  int mark = marker::interior;
};

struct Patch {
  std::vector<LocalVertex> vertices;
  std::vector<std::array<int, 3>> triangles;

  int add(const Vector2d& p, int mark) {
    vertices.push_back({p, -1, -1, mark});
    return static_cast<int>(vertices.size()) - 1;
  }
  int add_lattice(const Vector2d& p, int li, int lj) {
    vertices.push_back({p, li, lj, marker::interior});
    return static_cast<int>(vertices.size()) - 1;
  }
  const Vector2d& X(int v) const { return vertices[v].p; }

  void add_triangle(int a, int b, int c, int pore_index) {
    if (orient(X(a), X(b), X(c)) <= 0.0)
      throw MeshingError("non-positive element near pore " + std::to_string(pore_index), pore_index);
    triangles.push_back({a, b, c});
  }

  // Ear clipping, preferring the ear with the largest minimum angle.
  void triangulate_loop(std::vector<int> loop, int pore_index) {
    double area = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) area += cross(X(loop[k]), X(loop[(k + 1) % loop.size()]));
    if (area < 0.0) std::reverse(loop.begin(), loop.end());

    while (loop.size() > 3) {
      const std::size_t n = loop.size();
      int best = -1;
      double best_quality = -1.0;
      for (std::size_t k = 0; k < n; ++k) {
        const int a = loop[(k + n - 1) % n], b = loop[k], c = loop[(k + 1) % n];
        const double o = orient(X(a), X(b), X(c));
        const double scale = (X(a) - X(b)).squaredNorm() + (X(c) - X(b)).squaredNorm();
        if (o <= 1e-14 * scale) continue;
        bool empty = true;
        for (std::size_t q = 0; q < n && empty; ++q) {
          const int p = loop[q];
          if (p == a || p == b || p == c) continue;
          // Points on or within rounding of the ear boundary block it (collinear ray points).
          const double tol = -1e-12 * scale;
          if (orient(X(a), X(b), X(p)) >= tol && orient(X(b), X(c), X(p)) >= tol && orient(X(c), X(a), X(p)) >= tol)
            empty = false;
        }
        if (!empty) continue;
        const double quality = min_angle(X(a), X(b), X(c));
        if (quality > best_quality) {
          best_quality = quality;
          best = static_cast<int>(k);
        }
      }
      if (best < 0) throw MeshingError("ear clipping failed near pore " + std::to_string(pore_index), pore_index);
      const std::size_t k = static_cast<std::size_t>(best);
      add_triangle(loop[(k + n - 1) % n], loop[k], loop[(k + 1) % n], pore_index);
      loop.erase(loop.begin() + static_cast<long>(k));
    }
    add_triangle(loop[0], loop[1], loop[2], pore_index);
  }

  // Lawson flips towards Delaunay. Patch boundary edges have one triangle and never move.
  void delaunay_flips() {
    auto& T = triangles;
    for (int pass = 0; pass < 100; ++pass) {
      std::map<std::pair<int, int>, std::array<int, 2>> adjacency;
      for (int t = 0; t < static_cast<int>(T.size()); ++t)
        for (int k = 0; k < 3; ++k) {
          auto [it, inserted] = adjacency.try_emplace(edge_key(T[t][k], T[t][(k + 1) % 3]), std::array{t, -1});
          if (!inserted) it->second[1] = t;
        }
      std::vector<char> touched(T.size(), 0);
      int flips = 0;
      for (const auto& [edge, tris] : adjacency) {
        const int t1 = tris[0], t2 = tris[1];
        if (t2 < 0 || touched[t1] || touched[t2]) continue;
        auto opposite = [&](int t) {
          for (int k = 0; k < 3; ++k)
            if (T[t][k] != edge.first && T[t][k] != edge.second) return k;
          return -1;
        };
        const int k1 = opposite(t1), k2 = opposite(t2);
        // Rotate so t1 = (a, b, c) with edge a->b and t2 containing b->a with apex d.
        const int c = T[t1][k1], a = T[t1][(k1 + 1) % 3], b = T[t1][(k1 + 2) % 3];
        const int d = T[t2][k2];
        const double scale = (X(a) - X(b)).squaredNorm();
        if (incircle(X(a), X(b), X(c), X(d)) <= 1e-10 * scale * scale) continue;
        if (orient(X(a), X(d), X(c)) <= 1e-14 * scale || orient(X(d), X(b), X(c)) <= 1e-14 * scale) continue;
        T[t1] = {a, d, c};
        T[t2] = {d, b, c};
        touched[t1] = touched[t2] = 1;
        ++flips;
      }
      if (flips == 0) return;
    }
  }
};

// Rays from the cell centre to lattice points on the cell boundary split the ring between
// pore and square into wedges. Each wedge is layered radially and ear-clipped.
// With `closed` the rays go all the way round; otherwise only wedges between consecutive rays.
Patch mesh_wedges(const PoreShape& shape, int pore_resolution, const std::vector<Vector2d>& outer,
                  const std::vector<std::array<int, 2>>& lattice, bool closed, double h_tangent, double h_radial,
                  int pore_index) {
  Patch patch;
  const int rays = static_cast<int>(outer.size());
  const int wedges = closed ? rays : rays - 1;
  std::vector<int> outer_ids(rays);
  for (int i = 0; i < rays; ++i) outer_ids[i] = patch.add_lattice(outer[i], lattice[i][0], lattice[i][1]);

  std::vector<double> theta(rays + 1);
  for (int i = 0; i < rays; ++i) {
    theta[i] = std::atan2(outer[i].y(), outer[i].x());
    if (i > 0)
      while (theta[i] <= theta[i - 1]) theta[i] += 2.0 * std::numbers::pi;
  }
  theta[rays] = theta[0] + 2.0 * std::numbers::pi;

  const auto corners = pore_polygon(shape, pore_resolution);
  const double dphi = 2.0 * std::numbers::pi / pore_resolution;
  constexpr double angle_tol = 1e-12;

  auto polygon_point = [&](double angle) -> Vector2d {
    double t = std::fmod(angle, 2.0 * std::numbers::pi);
    if (t < 0) t += 2.0 * std::numbers::pi;
    int k = std::min(static_cast<int>(std::floor(t / dphi)), pore_resolution - 1);
    if (std::abs(t - k * dphi) < angle_tol) return corners[k];
    if (std::abs(t - (k + 1) * dphi) < angle_tol) return corners[(k + 1) % pore_resolution];
    const Vector2d dir(std::cos(angle), std::sin(angle));
    const Vector2d e = corners[(k + 1) % pore_resolution] - corners[k];
    return (cross(corners[k], e) / cross(dir, e)) * dir;
  };

  // Corner angles unwrapped into [theta_0, theta_0 + 2 pi).
  std::vector<std::pair<double, int>> corner_angles;
  for (int k = 0; k < pore_resolution; ++k) {
    double phi = k * dphi;
    while (phi < theta[0] - angle_tol) phi += 2.0 * std::numbers::pi;
    while (phi >= theta[rays] - angle_tol) phi -= 2.0 * std::numbers::pi;
    corner_angles.emplace_back(phi, k);
  }
  std::sort(corner_angles.begin(), corner_angles.end());

  std::vector<Vector2d> inner(rays), dir(rays);
  std::vector<int> inner_ids(rays);
  int layers = 1;
  for (int i = 0; i < rays; ++i) {
    dir[i] = outer[i].normalized();
    inner[i] = polygon_point(theta[i]);
    // Keep points on the mirror lines exactly on them.
    if (outer[i].y() == 0.0) inner[i].y() = 0.0;
    if (outer[i].x() == outer[i].y()) inner[i].x() = inner[i].y() = 0.5 * (inner[i].x() + inner[i].y());
    inner_ids[i] = patch.add(inner[i], marker::pore);
    layers = std::max(layers, static_cast<int>(std::ceil((outer[i] - inner[i]).norm() / h_radial)));
  }

  // Pore points between consecutive rays.
  std::vector<std::vector<Vector2d>> chains(wedges);
  {
    std::size_t next = 0;
    for (int i = 0; i < wedges; ++i) {
      chains[i].push_back(inner[i]);
      while (next < corner_angles.size() && corner_angles[next].first <= theta[i] + angle_tol) ++next;
      while (next < corner_angles.size() && corner_angles[next].first < theta[i + 1] - angle_tol)
        chains[i].push_back(corners[corner_angles[next++].second]);
      chains[i].push_back(inner[(i + 1) % rays]);
    }
  }

  // ring[j][i]: point on ray i at layer j (j = 0 pore, j = layers square).
  std::vector<double> inner_r(rays), gap(rays);
  std::vector<std::vector<int>> ring(layers + 1, std::vector<int>(rays));
  for (int i = 0; i < rays; ++i) {
    inner_r[i] = inner[i].norm();
    gap[i] = (outer[i].norm() - inner_r[i]) / layers;
  }
  ring[0] = inner_ids;
  ring[layers] = outer_ids;
  for (int j = 1; j < layers; ++j)
    for (int i = 0; i < rays; ++i) ring[j][i] = patch.add((inner_r[i] + j * gap[i]) * dir[i], marker::interior);

  // Lowest ring whose chord clears the pore chain of wedge i. Non-convex petals can
  // poke through the first chords on coarse meshes; those layers are merged.
  auto clear_layer = [&](int i) {
    const int i1 = (i + 1) % rays;
    for (int j = 1; j < layers; ++j) {
      const Vector2d p0 = patch.X(ring[j][i]), p1 = patch.X(ring[j][i1]);
      const Vector2d e = p1 - p0;
      bool clear = true;
      for (std::size_t k = 1; k + 1 < chains[i].size() && clear; ++k) {
        const Vector2d q = chains[i][k];
        const double qr = q.norm();
        clear = cross(p0, e) / cross(q / qr, e) > qr + 0.2 * std::min(gap[i], gap[i1]);
      }
      if (clear) return j;
    }
    return layers;
  };

  for (int i = 0; i < wedges; ++i) {
    const int i1 = (i + 1) % rays;
    const auto& chain = chains[i];
    std::vector<int> loop{inner_ids[i]};
    for (std::size_t s = 0; s + 1 < chain.size(); ++s) {
      const Vector2d p = chain[s], q = chain[s + 1];
      const int pieces = std::max(1, static_cast<int>(std::ceil((q - p).norm() / h_tangent)));
      for (int r = 1; r < pieces; ++r) loop.push_back(patch.add(p + (q - p) * (double(r) / pieces), marker::pore));
      if (s + 2 < chain.size()) loop.push_back(patch.add(q, marker::pore));
    }
    loop.push_back(inner_ids[i1]);
    const int base = clear_layer(i);
    for (int j = 1; j <= base; ++j) loop.push_back(ring[j][i1]);
    for (int j = base; j >= 1; --j) loop.push_back(ring[j][i]);
    patch.triangulate_loop(loop, pore_index);

    for (int j = base; j < layers; ++j)
      patch.triangulate_loop({ring[j][i], ring[j][i1], ring[j + 1][i1], ring[j + 1][i]}, pore_index);
  }
  patch.delaunay_flips();
  return patch;
}

// Element of the square's symmetry group: (x, y) -> swap ? (sx y, sy x) : (sx x, sy y).
struct Symmetry {
  int sx, sy;
  bool swap;
  Vector2d apply(const Vector2d& p) const {
    return swap ? Vector2d(sx * p.y(), sy * p.x()) : Vector2d(sx * p.x(), sy * p.y());
  }
  bool reverses() const { return (sx * sy < 0) != swap; }
};

class Builder {
 public:
  Builder(int cols, int rows, double cell_side, int per_edge)
      : cols_(cols), rows_(rows), per_edge_(per_edge), spacing_(cell_side / per_edge) {
    mesh.pore_cols = cols;
    mesh.pore_rows = rows;
    mesh.cell_side = cell_side;
    x0_ = -0.5 * cols * cell_side;
    y0_ = -0.5 * rows * cell_side;
  }

  Mesh mesh;

  int add_vertex(const Vector2d& p, int mark) {
    mesh.vertices.push_back(p);
    mesh.markers.push_back(mark);
    return mesh.num_vertices() - 1;
  }

  // Points on cell boundaries live on a global lattice so neighbouring cells share them bitwise.
  int lattice_vertex(long i, long j) {
    const auto key = std::pair{i, j};
    if (auto it = lattice_.find(key); it != lattice_.end()) return it->second;
    int mark = marker::interior;
    if (i == 0) mark |= marker::left;
    if (i == static_cast<long>(cols_) * per_edge_) mark |= marker::right;
    if (j == 0) mark |= marker::bottom;
    if (j == static_cast<long>(rows_) * per_edge_) mark |= marker::top;
    const int id = add_vertex({x0_ + i * spacing_, y0_ + j * spacing_}, mark);
    lattice_.emplace(key, id);
    return id;
  }

  // With a pore resolution divisible by 4 the pore polygon has the square's symmetries, so
  // one eighth of the cell is meshed and reflected; the result is exactly mirror symmetric.
  void mesh_cell(const PoreShape& shape, int col, int row, int pore_resolution, double h) {
    const int pore_index = row * cols_ + col;
    const int m = per_edge_;
    const double half = 0.5 * mesh.cell_side;
    std::vector<Vector2d> outer;
    std::vector<std::array<int, 2>> lattice;
    Patch patch;
    std::vector<Symmetry> group;

    if (pore_resolution % 4 == 0 && m % 2 == 0) {
      const int k = m / 2;
      for (int i = 0; i <= k; ++i) {
        outer.emplace_back(half, half * (static_cast<double>(i) / k));
        lattice.push_back({m, k + i});
      }
      patch = mesh_wedges(shape, pore_resolution, outer, lattice, false, h, h, pore_index);
      for (int sx : {1, -1})
        for (int sy : {1, -1})
          for (bool swap : {false, true}) group.push_back({sx, sy, swap});
    } else {
      const double step = 2.0 * half / m;
      auto local = [&](int li, int lj) { return Vector2d(-half + li * step, -half + lj * step); };
      for (int t = 0; t < m; ++t) lattice.push_back({t, 0});
      for (int t = 0; t < m; ++t) lattice.push_back({m, t});
      for (int t = 0; t < m; ++t) lattice.push_back({m - t, m});
      for (int t = 0; t < m; ++t) lattice.push_back({0, m - t});
      for (const auto& l : lattice) outer.push_back(local(l[0], l[1]));
      patch = mesh_wedges(shape, pore_resolution, outer, lattice, true, h, h, pore_index);
      group.push_back({1, 1, false});
    }

    const Vector2d center(x0_ + (col + 0.5) * mesh.cell_side, y0_ + (row + 0.5) * mesh.cell_side);
    const long ci = static_cast<long>(col) * m, cj = static_cast<long>(row) * m;
    std::map<std::pair<double, double>, int> placed;
    for (const auto& g : group) {
      std::vector<int> ids(patch.vertices.size());
      for (std::size_t v = 0; v < patch.vertices.size(); ++v) {
        const auto& lv = patch.vertices[v];
        if (lv.li >= 0) {
          // Doubled offsets from the cell centre keep the reflection in integers.
          const Eigen::Vector2i d(2 * lv.li - m, 2 * lv.lj - m);
          const Eigen::Vector2i r = g.swap ? Eigen::Vector2i(g.sx * d.y(), g.sy * d.x())
                                           : Eigen::Vector2i(g.sx * d.x(), g.sy * d.y());
          ids[v] = lattice_vertex(ci + (r.x() + m) / 2, cj + (r.y() + m) / 2);
          continue;
        }
        const Vector2d p = g.apply(lv.p);
        auto [it, inserted] = placed.try_emplace({p.x(), p.y()}, -1);
        if (inserted) it->second = add_vertex(center + p, lv.mark);
        ids[v] = it->second;
      }
      for (const auto& t : patch.triangles) {
        const int a = ids[t[0]], b = g.reverses() ? ids[t[2]] : ids[t[1]], c = g.reverses() ? ids[t[1]] : ids[t[2]];
        if (orient(mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]) <= 0.0)
          throw MeshingError("non-positive element near pore " + std::to_string(pore_index), pore_index);
        mesh.triangles.push_back({a, b, c});
      }
    }
  }

 private:
  int cols_, rows_, per_edge_;
  double spacing_;
  double x0_ = 0.0, y0_ = 0.0;
  std::map<std::pair<long, long>, int> lattice_;
};

}  // namespace

Mesh build_mesh(const PoreGrid& grid, const MeshParams& params) {
  if (grid.cols < 1 || grid.rows < 1 || static_cast<int>(grid.shapes.size()) != grid.cols * grid.rows)
    throw MeshingError("pore grid dimensions do not match its shape list", -1);
  if (params.pore_resolution < 3 || params.min_mesh_resolution < 1)
    throw MeshingError("pore_resolution must be >= 3 and min_mesh_resolution >= 1", -1);
  const double L = grid.shapes.front().cell_side;
  for (int p = 0; p < static_cast<int>(grid.shapes.size()); ++p) {
    const auto& s = grid.shapes[p];
    if (s.cell_side != L) throw MeshingError("pores must share one cell side", p);
    const auto e = pore_extent(s, 4 * params.pore_resolution + 1000);
    if (e.min_radius <= 0.0 || e.max_half_extent >= 0.5 * L)
      throw MeshingError("pore " + std::to_string(p) + " does not fit inside its cell", p);
  }

  const bool symmetric = params.pore_resolution % 4 == 0;
  const double h = target_element_size(L, params.min_mesh_resolution);
  double factor = 1.0 / std::sqrt(2.0);
  for (int attempt = 0; attempt < 16; ++attempt, factor *= 0.85) {
    const double ht = h * factor;
    int per_edge = std::max(1, static_cast<int>(std::ceil(L / ht - 1e-9)));
    if (symmetric) per_edge += per_edge % 2;
    Builder b(grid.cols, grid.rows, L, per_edge);
    for (int row = 0; row < grid.rows; ++row)
      for (int col = 0; col < grid.cols; ++col) b.mesh_cell(grid.at(col, row), col, row, params.pore_resolution, ht);
    if (b.mesh.max_edge_length() <= h * (1.0 + 1e-9)) return std::move(b.mesh);
  }
  throw MeshingError("could not reach the requested element size", -1);
}

Mesh build_component_mesh(const std::vector<PoreShape>& shapes, int pores_per_side, int pore_resolution,
                          int min_mesh_resolution) {
  if (pores_per_side < 1) throw MeshingError("pores_per_side must be >= 1", -1);
  PoreGrid g;
  g.cols = g.rows = pores_per_side;
  g.shapes = shapes;
  return build_mesh(g, MeshParams{pore_resolution, min_mesh_resolution});
}

void write_mesh(std::ostream& os, const Mesh& mesh) {
  os << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    os << mesh.vertices[v].x() << ' ' << mesh.vertices[v].y() << ' ' << mesh.markers[v] << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

Mesh read_mesh(std::istream& is) {
  Mesh mesh;
  long nv = -1, nt = -1;
  if (!(is >> nv >> nt) || nv < 0 || nt < 0) throw std::runtime_error("mesh: bad header");
  mesh.vertices.resize(nv);
  mesh.markers.resize(nv);
  for (long v = 0; v < nv; ++v)
    if (!(is >> mesh.vertices[v].x() >> mesh.vertices[v].y() >> mesh.markers[v]))
      throw std::runtime_error("mesh: bad vertex line " + std::to_string(v));
  mesh.triangles.resize(nt);
  for (long t = 0; t < nt; ++t) {
    auto& tri = mesh.triangles[t];
    if (!(is >> tri[0] >> tri[1] >> tri[2])) throw std::runtime_error("mesh: bad triangle line " + std::to_string(t));
    for (int k : tri)
      if (k < 0 || k >= nv) throw std::runtime_error("mesh: vertex index out of range in triangle " + std::to_string(t));
  }
  // Extent is recoverable; the pore layout is not part of the format.
  double xmin = 0, xmax = 0;
  if (nv > 0) {
    xmin = xmax = mesh.vertices[0].x();
    for (const auto& p : mesh.vertices) {
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
    }
  }
  mesh.cell_side = xmax - xmin;
  return mesh;
}

}  // namespace ces::geometry
