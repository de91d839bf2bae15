#pragma once

#include <Eigen/Dense>

namespace lipdse {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2x4 = Eigen::Matrix<double, 2, 4>;
using Mat4x2 = Eigen::Matrix<double, 4, 2>;
using Mat4 = Eigen::Matrix4d;
using Mat8 = Eigen::Matrix<double, 8, 8>;

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column k pairs with values(k)
};

/// Cyclic Jacobi diagonalization of a symmetric matrix. Sweeps until the
/// off-diagonal Frobenius mass falls below `tol` relative to the matrix norm.
/// Throws std::domain_error when `m` is not square or not symmetric to 1e-12
/// (relative).
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& m, double tol = 1e-12);

struct EigenRange {
  double min;
  double max;
};

/// Extreme eigenvalues of a symmetric matrix via jacobi_eigen.
EigenRange min_max_eig_sym(const Eigen::MatrixXd& m);

/// Operator 2-norm: square root of the largest eigenvalue of MᵀM.
double spectral_norm(const Eigen::MatrixXd& m);

}  // namespace lipdse
