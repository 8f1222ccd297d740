#include "fab/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace fab {

namespace {

bool all_finite(const MatrixRef& m) { return m.allFinite(); }

Eigen::ColPivHouseholderQR<Matrix> rank_revealing_qr(const MatrixRef& X) {
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(kRankTolerance);
    return qr;
}

// Rank counted against an absolute scale so a numerically zero matrix has rank 0.
Index rank_at_scale(const MatrixRef& M, double scale) {
    if (M.cols() == 0 || M.rows() == 0) return 0;
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    const auto& R = qr.matrixQR();
    const double cut = kRankTolerance * std::max(scale, R.diagonal().cwiseAbs().maxCoeff());
    Index r = 0;
    for (Index i = 0; i < std::min(M.rows(), M.cols()); ++i)
        if (std::abs(R(i, i)) > cut) ++r;
    return r;
}

}  // namespace

void validate(const GroupData& g) {
    if (g.n() < 1) throw std::invalid_argument("group '" + g.id + "' has no observations");
    if (g.X.rows() != g.n())
        throw std::invalid_argument("group '" + g.id + "': rows of X do not match length of y");
    if (g.Z && g.Z->rows() != g.n())
        throw std::invalid_argument("group '" + g.id + "': rows of Z do not match length of y");
    if (!g.y.allFinite() || !all_finite(g.X) || (g.Z && !all_finite(*g.Z)))
        throw std::invalid_argument("group '" + g.id + "' contains non-finite entries");
}

double ProjectionPair::projected_norm2(const VectorRef& v) const {
    if (rank == 0) return 0.0;
    return (basis.transpose() * v).squaredNorm();
}

Vector ProjectionPair::project(const VectorRef& v) const {
    if (rank == 0) return Vector::Zero(v.size());
    return basis * (basis.transpose() * v);
}

Vector ProjectionPair::residual(const VectorRef& v) const { return v - project(v); }

Matrix ProjectionPair::projector() const { return basis * basis.transpose(); }

ProjectionPair qr_projection(const MatrixRef& X) {
    if (X.cols() < 1) throw std::invalid_argument("qr_projection: design has no columns");
    if (!all_finite(X)) throw std::invalid_argument("qr_projection: non-finite entries");
    const Index n = X.rows();
    auto qr = rank_revealing_qr(X);
    ProjectionPair out;
    out.rank = qr.rank();
    out.basis = Matrix(qr.householderQ()) .leftCols(out.rank);
    if (out.basis.rows() != n) out.basis.resize(n, 0);
    return out;
}

Matrix orthogonal_complement(const MatrixRef& A) {
    const Index n = A.rows();
    if (A.cols() == 0) return Matrix::Identity(n, n);
    auto qr = rank_revealing_qr(A);
    const Index r = qr.rank();
    const Matrix Q = qr.householderQ();
    return Q.rightCols(n - r).transpose();
}

PriorImage ReducedProblem::prior_map(const VectorRef& beta0, const MatrixRef& Psi) const {
    const Index p = beta0.size();
    if (design.cols() != blocks * p)
        throw std::invalid_argument("prior_map: beta0 length does not match the reduced design");
    if (Psi.rows() != p || Psi.cols() != p)
        throw std::invalid_argument("prior_map: Psi has the wrong shape");
    if (offset.size() != 0 && offset.size() != design.rows())
        throw std::invalid_argument("prior_map: offset has the wrong length");
    const Index n = design.rows();
    PriorImage img;
    img.mean = offset.size() == 0 ? Vector::Zero(n) : Vector(-offset);
    img.coef_cov = Matrix::Zero(n, n);
    for (Index b = 0; b < blocks; ++b) {
        const auto D = design.middleCols(b * p, p);
        img.mean.noalias() += D * beta0;
        img.coef_cov.noalias() += D * Psi * D.transpose();
    }
    img.coef_cov = 0.5 * (img.coef_cov + img.coef_cov.transpose());
    return img;
}

ReducedProblem project_out_nuisance(const GroupData& g) {
    validate(g);
    ReducedProblem rp;
    if (g.has_nuisance()) {
        const auto qr = rank_revealing_qr(*g.Z);
        if (g.n() <= qr.rank())
            throw std::domain_error("group '" + g.id + "': no residual degrees of freedom");
        rp.W = orthogonal_complement(*g.Z);
    } else {
        rp.W = Matrix::Identity(g.n(), g.n());
    }
    rp.design = rp.W * g.X;
    rp.z = rp.W * g.y;
    rp.offset = Vector::Zero(rp.W.rows());
    const double norm = rp.z.norm();
    if (!(norm > kRankTolerance * g.y.norm())) throw std::domain_error("group '" + g.id + "': degenerate observation");
    rp.u = rp.z / norm;
    if (rp.design.cols() == 0) {
        rp.powerless = true;
        rp.hypotheses_equivalent = true;
    } else {
        const Index rank = rank_at_scale(rp.design, g.X.norm());
        rp.powerless = rank == 0;
        rp.hypotheses_equivalent = rank == rp.design.cols();
    }
    return rp;
}

GroupData reduce_nuisance(const GroupData& g) {
    if (!g.has_nuisance()) {
        validate(g);
        GroupData out = g;
        out.Z.reset();
        return out;
    }
    const auto qr = rank_revealing_qr(*g.Z);
    if (g.n() <= qr.rank())
        throw std::domain_error("group '" + g.id + "': no residual degrees of freedom");
    const Matrix W = orthogonal_complement(*g.Z);
    GroupData out;
    out.id = g.id;
    out.y = W * g.y;
    out.X = W * g.X;
    return out;
}

ReducedProblem reduce_linear_hypothesis(const std::vector<GroupData>& groups,
                                        const LinearHypothesis& h) {
    if (h.group_indices.empty()) throw std::invalid_argument("hypothesis names no groups");
    std::set<Index> seen;
    for (Index j : h.group_indices) {
        if (j < 0 || j >= static_cast<Index>(groups.size()))
            throw std::invalid_argument("hypothesis group index out of range");
        if (!seen.insert(j).second) throw std::invalid_argument("hypothesis repeats a group");
    }
    const Index l = static_cast<Index>(h.group_indices.size());

    std::vector<GroupData> reduced;
    reduced.reserve(l);
    for (Index j : h.group_indices) reduced.push_back(reduce_nuisance(groups[j]));
    const Index p = reduced.front().p();
    Index N = 0;
    for (const auto& g : reduced) {
        if (g.p() != p) throw std::invalid_argument("hypothesis groups differ in covariate count");
        N += g.n();
    }
    if (h.A.cols() != l * p)
        throw std::invalid_argument("constraint matrix must have l * p columns");
    if (h.A.rows() != h.v.size()) throw std::invalid_argument("A and v disagree in row count");

    // Stacked block-diagonal design in group-index order.
    Matrix Xs = Matrix::Zero(N, l * p);
    Vector ys(N);
    Index row = 0;
    for (Index b = 0; b < l; ++b) {
        const auto& g = reduced[b];
        Xs.block(row, b * p, g.n(), p) = g.X;
        ys.segment(row, g.n()) = g.y;
        row += g.n();
    }

    // Minimum-norm solution of A beta = v, and membership check v in col(A).
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(h.A);
    cod.setThreshold(kRankTolerance);
    const Vector beta_star = cod.solve(h.v);
    const double resid = (h.A * beta_star - h.v).norm();
    if (resid > 1e-8 * std::max(1.0, h.v.norm()))
        throw std::invalid_argument("hypothesis target v does not lie in col(A)");

    // S = X null(A); W spans its orthogonal complement in R^N.
    const Matrix At = h.A.transpose();
    Matrix S_basis;
    if (h.A.rows() == 0) {
        S_basis = Xs;
    } else {
        auto qr = rank_revealing_qr(At);
        const Index ra = qr.rank();
        const Matrix Q = qr.householderQ();
        S_basis = Xs * Q.rightCols(l * p - ra);
    }

    ReducedProblem rp;
    rp.blocks = l;
    rp.W = orthogonal_complement(S_basis);
    if (rp.W.rows() == 0) throw std::invalid_argument("hypothesis is vacuous: S^perp is trivial");
    rp.design = rp.W * Xs;
    rp.offset = rp.design * beta_star;
    rp.z = rp.W * ys - rp.offset;
    const double norm = rp.z.norm();
    if (!(norm > kRankTolerance * std::max(ys.norm(), rp.offset.norm())))
        throw std::domain_error("degenerate observation");
    rp.u = rp.z / norm;
    const Index rank = rank_at_scale(rp.design, Xs.norm());
    rp.powerless = rank == 0;
    rp.hypotheses_equivalent = rank == rp.design.cols();
    return rp;
}

double f_statistic(const VectorRef& u, const ProjectionPair& proj) {
    const Index n = u.size();
    const Index p = proj.rank;
    if (proj.dim() != n) throw std::invalid_argument("f_statistic: dimension mismatch");
    if (p == 0 || p >= n) throw std::domain_error("F-test degenerate: power equals level");
    const double total = u.squaredNorm();
    const double explained = proj.projected_norm2(u) / total;
    const double unexplained = 1.0 - explained;
    if (unexplained <= 4.0 * std::numeric_limits<double>::epsilon())
        return std::numeric_limits<double>::infinity();
    return (static_cast<double>(n - p) / static_cast<double>(p)) * explained / unexplained;
}

}  // namespace fab
