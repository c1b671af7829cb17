#include "ces/fem.hpp"

#include <cmath>

namespace ces::fem {

using Eigen::Matrix2d;
using Eigen::Matrix4d;
using Eigen::Vector4d;

void Material::validate() const {
  if (!(mu > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("material moduli must be positive");
  if (dim != 2) throw std::invalid_argument("only the plane (d = 2) formulation is supported");
}

double energy_density(const Matrix2d& F, const Material& material) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InversionError(-1, J);
  return 0.5 * material.mu * (F.squaredNorm() / J - 2.0) + 0.5 * material.kappa * (J - 1.0) * (J - 1.0);
}

DensityDerivatives density_derivatives(const Matrix2d& F, const Material& material) {
  const Vector4d f(F(0, 0), F(0, 1), F(1, 0), F(1, 1));
  const double J = f[0] * f[3] - f[1] * f[2];
  if (!(J > 0.0)) throw InversionError(-1, J);
  const double I = f.squaredNorm();
  const double mu = material.mu, kappa = material.kappa;

  // dJ/dF is the cofactor; its derivative is the constant swap A.
  const Vector4d c(f[3], -f[2], -f[1], f[0]);
  Matrix4d A = Matrix4d::Zero();
  A(0, 3) = A(3, 0) = 1.0;
  A(1, 2) = A(2, 1) = -1.0;

  DensityDerivatives d;
  d.W = 0.5 * mu * (I / J - 2.0) + 0.5 * kappa * (J - 1.0) * (J - 1.0);
  d.P = 0.5 * mu * (2.0 * f / J - I * c / (J * J)) + kappa * (J - 1.0) * c;
  const double J2 = J * J;
  d.dP = 0.5 * mu *
             (2.0 / J * Matrix4d::Identity() - 2.0 / J2 * (f * c.transpose() + c * f.transpose()) +
              2.0 * I / (J2 * J) * c * c.transpose() - I / J2 * A) +
         kappa * (c * c.transpose() + (J - 1.0) * A);
  return d;
}

Discretization::Discretization(const Mesh& mesh)
    : num_vertices_(mesh.num_vertices()), triangles_(mesh.triangles) {
  area_.resize(triangles_.size());
  grads_.resize(triangles_.size());
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    const Eigen::Vector2d& x0 = mesh.vertices[tri[0]];
    Matrix2d D;
    D.col(0) = mesh.vertices[tri[1]] - x0;
    D.col(1) = mesh.vertices[tri[2]] - x0;
    const double det = D.determinant();
    if (!(det > 0.0)) throw std::invalid_argument("mesh triangle " + std::to_string(t) + " is not positively oriented");
    area_[t] = 0.5 * det;
    // Gradients of N1, N2 are the rows of D^{-1}; N0 = 1 - N1 - N2.
    const Matrix2d Dinv = D.inverse();
    grads_[t].row(1) = Dinv.row(0);
    grads_[t].row(2) = Dinv.row(1);
    grads_[t].row(0) = -Dinv.row(0) - Dinv.row(1);
  }
}

Matrix2d Discretization::deformation_gradient(int t, const Eigen::VectorXd& u) const {
  Matrix2d F = Matrix2d::Identity();
  const auto& tri = triangles_[t];
  for (int a = 0; a < 3; ++a) {
    const Eigen::Vector2d ua(u[2 * tri[a]], u[2 * tri[a] + 1]);
    F += ua * grads_[t].row(a);
  }
  return F;
}

namespace {

// B maps the six element dofs to the row-major flattened F.
Eigen::Matrix<double, 4, 6> strain_operator(const Eigen::Matrix<double, 3, 2>& G) {
  Eigen::Matrix<double, 4, 6> B = Eigen::Matrix<double, 4, 6>::Zero();
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) B(2 * i + j, 2 * a + i) = G(a, j);
  return B;
}

}  // namespace

Assembly assemble(const Discretization& disc, const Eigen::VectorXd& u, const Material& material,
                  bool with_tangent) {
  Assembly out;
  out.gradient = Eigen::VectorXd::Zero(disc.num_dofs());
  std::vector<Eigen::Triplet<double>> triplets;
  if (with_tangent) triplets.reserve(36 * static_cast<std::size_t>(disc.num_triangles()));

  for (int t = 0; t < disc.num_triangles(); ++t) {
    const Matrix2d F = disc.deformation_gradient(t, u);
    DensityDerivatives d;
    try {
      d = density_derivatives(F, material);
    } catch (const InversionError&) {
      throw InversionError(t, F.determinant());
    }
    const auto B = strain_operator(disc.gradients(t));
    const double A = disc.area(t);
    const auto& tri = disc.triangle(t);
    out.energy += A * d.W;
    const Eigen::Matrix<double, 6, 1> ge = A * B.transpose() * d.P;
    for (int a = 0; a < 3; ++a)
      for (int i = 0; i < 2; ++i) out.gradient[2 * tri[a] + i] += ge[2 * a + i];
    if (!with_tangent) continue;
    const Eigen::Matrix<double, 6, 6> Ke = A * B.transpose() * d.dP * B;
    for (int a = 0; a < 3; ++a)
      for (int i = 0; i < 2; ++i)
        for (int b = 0; b < 3; ++b)
          for (int k = 0; k < 2; ++k)
            triplets.emplace_back(2 * tri[a] + i, 2 * tri[b] + k, Ke(2 * a + i, 2 * b + k));
  }
  if (with_tangent) {
    out.tangent.resize(disc.num_dofs(), disc.num_dofs());
    out.tangent.setFromTriplets(triplets.begin(), triplets.end());
  }
  return out;
}

Assembly assemble(const Mesh& mesh, const Eigen::VectorXd& u, const Material& material) {
  return assemble(Discretization(mesh), u, material, true);
}

double assemble_energy(const Discretization& disc, const Eigen::VectorXd& u, const Material& material) {
  double energy = 0.0;
  for (int t = 0; t < disc.num_triangles(); ++t) {
    const Matrix2d F = disc.deformation_gradient(t, u);
    const double J = F.determinant();
    if (!(J > 0.0)) throw InversionError(t, J);
    energy += disc.area(t) * energy_density(F, material);
  }
  return energy;
}

bool all_elements_valid(const Discretization& disc, const Eigen::VectorXd& u) {
  for (int t = 0; t < disc.num_triangles(); ++t)
    if (!(disc.deformation_gradient(t, u).determinant() > 0.0)) return false;
  return true;
}

}  // namespace ces::fem
