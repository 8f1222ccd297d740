#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fab/core_model.hpp"
#include "support.hpp"

using namespace fab;
using fab::testing::engine;
using fab::testing::gaussian_matrix;
using fab::testing::gaussian_vector;

namespace {

GroupData make_group(std::uint64_t seed, Index n, Index p, Index q) {
    auto eng = engine(seed);
    GroupData g;
    g.id = "g" + std::to_string(seed);
    g.X = gaussian_matrix(eng, n, p);
    g.y = gaussian_vector(eng, n);
    if (q > 0) g.Z = gaussian_matrix(eng, n, q);
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// GroupData validation
// ---------------------------------------------------------------------------

TEST(GroupData, RejectsMismatchedRows) {
    GroupData g = make_group(1, 5, 2, 0);
    g.X = Matrix::Ones(4, 2);
    EXPECT_THROW(validate(g), std::invalid_argument);
}

TEST(GroupData, RejectsNonFinite) {
    GroupData g = make_group(1, 5, 2, 1);
    g.y[2] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(validate(g), std::invalid_argument);
    g = make_group(1, 5, 2, 1);
    (*g.Z)(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(validate(g), std::invalid_argument);
}

TEST(GroupData, RejectsEmpty) {
    GroupData g;
    g.X = Matrix(0, 1);
    g.y = Vector(0);
    EXPECT_THROW(validate(g), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

TEST(Projection, RankAndIdempotence) {
    auto eng = engine(2);
    Matrix X = gaussian_matrix(eng, 8, 3);
    X.col(2) = X.col(0) - 2.0 * X.col(1);  // rank 2
    const ProjectionPair pp = qr_projection(X);
    EXPECT_EQ(pp.rank, 2);
    const Matrix P = pp.projector();
    EXPECT_LT((P * P - P).norm(), 1e-12);
    EXPECT_LT((P - P.transpose()).norm(), 1e-12);
    EXPECT_LT((P * X - X).norm(), 1e-12);
    const Vector y = gaussian_vector(eng, 8);
    EXPECT_LT(std::abs(pp.residual(y).dot(pp.project(y))), 1e-12);
    EXPECT_NEAR(pp.projected_norm2(y), pp.project(y).squaredNorm(), 1e-12);
}

TEST(Projection, ZeroMatrixHasRankZero) {
    const ProjectionPair pp = qr_projection(Matrix::Zero(5, 2));
    EXPECT_EQ(pp.rank, 0);
    EXPECT_EQ(pp.basis.cols(), 0);
}

TEST(OrthogonalComplement, SpansComplement) {
    auto eng = engine(3);
    const Matrix A = gaussian_matrix(eng, 7, 3);
    const Matrix W = orthogonal_complement(A);
    EXPECT_EQ(W.rows(), 4);
    EXPECT_EQ(W.cols(), 7);
    EXPECT_LT((W * W.transpose() - Matrix::Identity(4, 4)).norm(), 1e-12);
    EXPECT_LT((W * A).norm(), 1e-12);
}

TEST(OrthogonalComplement, EmptyInputGivesIdentity) {
    const Matrix W = orthogonal_complement(Matrix(5, 0));
    EXPECT_LT((W - Matrix::Identity(5, 5)).norm(), 0.0 + 1e-15);
}

TEST(OrthogonalComplement, FullRankSquareGivesEmpty) {
    auto eng = engine(4);
    EXPECT_EQ(orthogonal_complement(gaussian_matrix(eng, 4, 4)).rows(), 0);
}

// ---------------------------------------------------------------------------
// Nuisance reduction
// ---------------------------------------------------------------------------

TEST(NuisanceReduction, DimensionsAndUnitDirection) {
    const GroupData g = make_group(5, 12, 2, 3);
    const ReducedProblem rp = project_out_nuisance(g);
    EXPECT_EQ(rp.n_prime(), 9);
    EXPECT_EQ(rp.design.rows(), 9);
    EXPECT_EQ(rp.design.cols(), 2);
    EXPECT_NEAR(rp.u.norm(), 1.0, 1e-14);
    EXPECT_FALSE(rp.powerless);
    EXPECT_TRUE(rp.hypotheses_equivalent);
    EXPECT_LT((rp.W * g.Z->col(0)).norm(), 1e-12);
}

TEST(NuisanceReduction, InvariantToNuisanceShift) {
    GroupData g = make_group(6, 10, 2, 2);
    const ReducedProblem a = project_out_nuisance(g);
    g.y += *g.Z * (Vector(2) << 3.0, -7.5).finished();
    const ReducedProblem b = project_out_nuisance(g);
    EXPECT_LT((a.u - b.u).norm(), 1e-10);
}

TEST(NuisanceReduction, WithoutNuisanceIsIdentity) {
    const GroupData g = make_group(7, 6, 2, 0);
    const ReducedProblem rp = project_out_nuisance(g);
    EXPECT_LT((rp.u - g.y.normalized()).norm(), 1e-15);
    EXPECT_LT((rp.design - g.X).norm(), 1e-15);
}

TEST(NuisanceReduction, PowerlessWhenXInColZ) {
    GroupData g = make_group(8, 10, 1, 2);
    g.X.col(0) = g.Z->col(0) + 0.5 * g.Z->col(1);
    const ReducedProblem rp = project_out_nuisance(g);
    EXPECT_TRUE(rp.powerless);
}

TEST(NuisanceReduction, RankDeficientDesignFlagsNonEquivalence) {
    GroupData g = make_group(9, 10, 2, 1);
    g.X.col(1) = 2.0 * g.X.col(0) + 3.0 * g.Z->col(0);
    const ReducedProblem rp = project_out_nuisance(g);
    EXPECT_FALSE(rp.powerless);
    EXPECT_FALSE(rp.hypotheses_equivalent);
}

TEST(NuisanceReduction, NoResidualDegreesOfFreedom) {
    const GroupData g = make_group(10, 3, 1, 3);
    EXPECT_THROW(project_out_nuisance(g), std::domain_error);
    EXPECT_THROW(reduce_nuisance(g), std::domain_error);
}

TEST(NuisanceReduction, DegenerateObservation) {
    GroupData g = make_group(11, 6, 1, 1);
    g.y = 2.0 * g.Z->col(0);
    EXPECT_THROW(project_out_nuisance(g), std::domain_error);
}

TEST(NuisanceReduction, ReducedGroupMatchesReducedProblem) {
    const GroupData g = make_group(12, 9, 2, 2);
    const GroupData r = reduce_nuisance(g);
    const ReducedProblem rp = project_out_nuisance(g);
    EXPECT_FALSE(r.has_nuisance());
    EXPECT_EQ(r.n(), rp.n_prime());
    EXPECT_NEAR(r.y.norm(), rp.z.norm(), 1e-12);
}

// ---------------------------------------------------------------------------
// General linear hypotheses
// ---------------------------------------------------------------------------

TEST(LinearHypothesis, IdentityConstraintMatchesGroupTest) {
    const std::vector<GroupData> groups{make_group(20, 10, 2, 1)};
    LinearHypothesis h{Matrix::Identity(2, 2), Vector::Zero(2), {0}};
    const ReducedProblem a = reduce_linear_hypothesis(groups, h);
    const ReducedProblem b = project_out_nuisance(groups[0]);
    ASSERT_EQ(a.n_prime(), b.n_prime());
    const double fa = f_statistic(a.u, qr_projection(a.design));
    const double fb = f_statistic(b.u, qr_projection(b.design));
    EXPECT_NEAR(fa, fb, 1e-10 * std::abs(fb));
}

TEST(LinearHypothesis, EqualityAcrossGroups) {
    const std::vector<GroupData> groups{make_group(21, 8, 2, 0), make_group(22, 7, 2, 0)};
    Matrix A(2, 4);
    A << 1, 0, -1, 0, 0, 1, 0, -1;
    LinearHypothesis h{A, Vector::Zero(2), {0, 1}};
    const ReducedProblem rp = reduce_linear_hypothesis(groups, h);
    EXPECT_EQ(rp.n_prime(), 15 - 2);
    EXPECT_EQ(rp.blocks, 2);
    EXPECT_EQ(qr_projection(rp.design).rank, 2);
    EXPECT_FALSE(rp.hypotheses_equivalent);  // 4 columns, rank 2
}

TEST(LinearHypothesis, NullDataGivesNullDirection) {
    // Under H: beta_1 = beta_2 = b the reduced z has mean zero.
    auto eng = engine(23);
    std::vector<GroupData> groups{make_group(23, 8, 2, 0), make_group(24, 9, 2, 0)};
    const Vector b = (Vector(2) << 1.5, -2.0).finished();
    for (auto& g : groups) g.y = g.X * b;  // noise-free
    Matrix A(2, 4);
    A << 1, 0, -1, 0, 0, 1, 0, -1;
    LinearHypothesis h{A, Vector::Zero(2), {0, 1}};
    for (auto& g : groups) g.y += 1e-3 * gaussian_vector(eng, g.n());
    const ReducedProblem rp = reduce_linear_hypothesis(groups, h);
    EXPECT_LT(rp.z.norm(), 1e-2);
}

TEST(LinearHypothesis, NonZeroTargetOffsets) {
    const std::vector<GroupData> groups{make_group(25, 10, 2, 0)};
    LinearHypothesis h{Matrix::Identity(2, 2), (Vector(2) << 1.0, 2.0).finished(), {0}};
    GroupData g = groups[0];
    g.y = g.X * h.v;  // exactly on the null
    g.y[0] += 1e-6;
    const ReducedProblem rp = reduce_linear_hypothesis({g}, h);
    EXPECT_LT(rp.z.norm(), 1e-5);
}

TEST(LinearHypothesis, Errors) {
    const std::vector<GroupData> groups{make_group(26, 6, 2, 0), make_group(27, 6, 3, 0)};
    EXPECT_THROW(reduce_linear_hypothesis(groups, {Matrix::Identity(2, 2), Vector::Zero(2), {}}),
                 std::invalid_argument);
    EXPECT_THROW(reduce_linear_hypothesis(groups, {Matrix::Identity(2, 2), Vector::Zero(2), {5}}),
                 std::invalid_argument);
    EXPECT_THROW(reduce_linear_hypothesis(groups, {Matrix::Identity(4, 4), Vector::Zero(4), {0, 0}}),
                 std::invalid_argument);
    EXPECT_THROW(reduce_linear_hypothesis(groups, {Matrix::Identity(5, 5), Vector::Zero(5), {0, 1}}),
                 std::invalid_argument);
    // v outside col(A)
    Matrix A(2, 2);
    A << 1, 1, 2, 2;
    EXPECT_THROW(reduce_linear_hypothesis(groups, {A, (Vector(2) << 1.0, 0.0).finished(), {0}}),
                 std::invalid_argument);
}

TEST(LinearHypothesis, VacuousWhenSaturated) {
    // N = p and no constraint: S = col(X) = R^N.
    const std::vector<GroupData> groups{make_group(28, 2, 2, 0)};
    EXPECT_THROW(reduce_linear_hypothesis(groups, {Matrix(0, 2), Vector(0), {0}}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// F statistic and prior image
// ---------------------------------------------------------------------------

TEST(FStatistic, KnownValue) {
    // u = (3, 4, 0, 0, 12) / 13, X = e1: u'Pu = 9/169.
    Vector u(5);
    u << 3, 4, 0, 0, 12;
    u /= 13.0;
    Matrix X = Matrix::Zero(5, 1);
    X(0, 0) = 1.0;
    const double expected = 4.0 * (9.0 / 169.0) / (160.0 / 169.0);
    EXPECT_NEAR(f_statistic(u, qr_projection(X)), expected, 1e-14);
}

TEST(FStatistic, SaturatedAndDegenerate) {
    Matrix X = Matrix::Zero(4, 2);
    X(0, 0) = X(1, 1) = 1.0;
    Vector u = Vector::Zero(4);
    u[0] = 1.0;
    EXPECT_TRUE(std::isinf(f_statistic(u, qr_projection(X))));
    EXPECT_THROW(f_statistic(u, qr_projection(Matrix::Identity(4, 4))), std::domain_error);
    EXPECT_THROW(f_statistic(u, qr_projection(Matrix::Zero(4, 1))), std::domain_error);
}

TEST(PriorMap, MeanAndCovariance) {
    auto eng = engine(30);
    ReducedProblem rp;
    rp.design = gaussian_matrix(eng, 6, 4);
    rp.blocks = 2;
    const Vector b0 = (Vector(2) << 0.5, -1.0).finished();
    Matrix Psi(2, 2);
    Psi << 2.0, 0.3, 0.3, 1.0;
    const PriorImage img = rp.prior_map(b0, Psi);
    Vector stacked(4);
    stacked << b0, b0;
    Matrix big = Matrix::Zero(4, 4);
    big.topLeftCorner(2, 2) = Psi;
    big.bottomRightCorner(2, 2) = Psi;
    EXPECT_LT((img.mean - rp.design * stacked).norm(), 1e-12);
    EXPECT_LT((img.coef_cov - rp.design * big * rp.design.transpose()).norm(), 1e-12);
}
