#include "fab/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace fab {

Matrix clip_psd(const MatrixRef& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
    Matrix out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

double min_eigenvalue(const MatrixRef& m) {
    if (m.size() == 0) return 0.0;
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

}  // namespace fab
