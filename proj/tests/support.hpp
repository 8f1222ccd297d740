#pragma once

// Shared helpers for the test suites.

#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fab/core_model.hpp"
#include "fab/random.hpp"

namespace fab::testing {

inline Matrix gaussian_matrix(std::mt19937_64& eng, Index rows, Index cols) {
    boost::random::normal_distribution<double> z;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = z(eng);
    return m;
}

inline Vector gaussian_vector(std::mt19937_64& eng, Index n) { return gaussian_matrix(eng, n, 1).col(0); }

inline Vector unit_vector(std::mt19937_64& eng, Index n) {
    Vector u(n);
    fill_unit_vector(eng, u);
    return u;
}

inline std::mt19937_64 engine(std::uint64_t seed) { return block_engine(seed, hash_string("tests"), 0); }

// m groups of size n with X = [1, x], beta_j ~ N(beta0, Psi), noise variance sigma2.
inline std::vector<GroupData> linking_groups(std::mt19937_64& eng, Index m, Index n, const Vector& beta0,
                                             const Matrix& Psi, double sigma2) {
    const Eigen::LLT<Matrix> L(Psi);
    const Matrix chol = L.matrixL();
    std::vector<GroupData> out;
    for (Index j = 0; j < m; ++j) {
        GroupData g;
        g.id = "g" + std::to_string(j);
        g.X.resize(n, beta0.size());
        g.X.col(0).setOnes();
        if (beta0.size() > 1) g.X.rightCols(beta0.size() - 1) = gaussian_matrix(eng, n, beta0.size() - 1);
        const Vector b = beta0 + chol * gaussian_vector(eng, beta0.size());
        g.y = g.X * b + std::sqrt(sigma2) * gaussian_vector(eng, n);
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace fab::testing
