#pragma once

// Linear-model data structures and the reductions that turn a group-level or
// multi-group linear hypothesis into the canonical problem
//
//     z ~ N(D * theta, sigma^2 I),   H: theta = 0,
//
// which is tested through the direction u = z / |z| alone.

#include <optional>
#include <string>
#include <vector>

#include "fab/linalg.hpp"

namespace fab {

struct GroupData {
    std::string id;
    Vector y;
    Matrix X;                  // focal covariates, n x p
    std::optional<Matrix> Z;   // nuisance covariates, n x q

    Index n() const { return y.size(); }
    Index p() const { return X.cols(); }
    bool has_nuisance() const { return Z.has_value() && Z->cols() > 0; }
};

// Throws std::invalid_argument when row counts disagree, n == 0, or any entry
// is non-finite.
void validate(const GroupData& g);

// Orthonormal basis of col(X) together with its rank.
struct ProjectionPair {
    Matrix basis;   // n x rank, orthonormal columns
    Index rank = 0;

    Index dim() const { return basis.rows(); }
    double projected_norm2(const VectorRef& v) const;
    Vector project(const VectorRef& v) const;
    Vector residual(const VectorRef& v) const;
    Matrix projector() const;
};

ProjectionPair qr_projection(const MatrixRef& X);

// Matrix W with orthonormal rows spanning col(A)^perp in R^{rows(A)}. An
// n x 0 input gives the identity.
Matrix orthogonal_complement(const MatrixRef& A);

// H: A * beta_{1:l} = v, where beta_{1:l} stacks the coefficients of the
// groups listed in group_indices, in that order.
struct LinearHypothesis {
    Matrix A;
    Vector v;
    std::vector<Index> group_indices;
};

// Mean and coefficient part of the covariance of the reduced response under a
// normal prior on the coefficients; Sigma(sigma^2) = coef_cov + sigma^2 I.
struct PriorImage {
    Vector mean;
    Matrix coef_cov;
};

struct ReducedProblem {
    Vector u;          // unit vector, length n'
    Vector z;          // W y - offset, so u = z / |z|
    Matrix W;          // n' x N, orthonormal rows
    Matrix design;     // W X, n' x (blocks * p)
    Vector offset;     // W X beta*, zero for plain nuisance reduction
    Index blocks = 1;  // number of stacked coefficient blocks l
    bool powerless = false;
    bool hypotheses_equivalent = true;

    Index n_prime() const { return u.size(); }

    // Push beta_{1:l} ~ N(1 (x) beta0, I (x) Psi) through the reduction.
    PriorImage prior_map(const VectorRef& beta0, const MatrixRef& Psi) const;
};

// Project the nuisance columns Z out of a single group. Without Z the
// reduction is the identity.
ReducedProblem project_out_nuisance(const GroupData& g);

// Same reduction, returned as a nuisance-free group (y <- W y, X <- W X).
GroupData reduce_nuisance(const GroupData& g);

ReducedProblem reduce_linear_hypothesis(const std::vector<GroupData>& groups,
                                        const LinearHypothesis& h);

// ((n - p) / p) * u'Pu / (1 - u'Pu). Returns +inf when u lies in col(X)
// (the saturated case). Throws std::domain_error when p == 0 or p >= n.
double f_statistic(const VectorRef& u, const ProjectionPair& proj);

}  // namespace fab
