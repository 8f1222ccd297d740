#pragma once

#include <Eigen/Dense>

namespace fab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using VectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<const Matrix>;

// Relative tolerance on |R_ii| used by every rank-revealing factorization.
inline constexpr double kRankTolerance = 1e-10;

// Symmetrize and clip negative eigenvalues to zero.
Matrix clip_psd(const MatrixRef& m);

// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const MatrixRef& m);

}  // namespace fab
