#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fab/null_mc.hpp"
#include "support.hpp"

using namespace fab;
using fab::testing::engine;
using fab::testing::gaussian_matrix;
using fab::testing::gaussian_vector;

namespace {

// NaN on the first draw with a positive first coordinate.
class PoisonedStatistic : public Statistic {
public:
    explicit PoisonedStatistic(Index n) : n_(n) {}
    Index dim() const override { return n_; }
    double operator()(const VectorRef& u) const override {
        return u[0] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : u[0];
    }

private:
    Index n_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Sphere ensemble
// ---------------------------------------------------------------------------

TEST(SphereNull, UnitColumnsAndProvenance) {
    const NullEnsemble ens = sample_null_sphere(6, 500, 11);
    EXPECT_EQ(ens.n(), 6);
    EXPECT_EQ(ens.size(), 500);
    EXPECT_EQ(ens.provenance, NullProvenance::gaussian_sphere);
    EXPECT_EQ(ens.seed, 11u);
    for (Index s = 0; s < 500; ++s) EXPECT_NEAR(ens.draws.col(s).norm(), 1.0, 1e-14);
}

TEST(SphereNull, DeterministicAndThreadInvariant) {
    const NullEnsemble a = sample_null_sphere(5, 1000, 3, 1);
    const NullEnsemble b = sample_null_sphere(5, 1000, 3, 4);
    const NullEnsemble c = sample_null_sphere(5, 1000, 4, 1);
    EXPECT_TRUE(a.draws == b.draws);
    EXPECT_FALSE(a.draws == c.draws);
}

TEST(SphereNull, PrefixStable) {
    const NullEnsemble small = sample_null_sphere(4, 300, 8);
    const NullEnsemble big = sample_null_sphere(4, 1000, 8);
    EXPECT_TRUE(small.draws == big.draws.leftCols(300));
}

TEST(SphereNull, MomentsOfUniformDirection) {
    const Index n = 5, S = 20000;
    const NullEnsemble ens = sample_null_sphere(n, S, 21);
    const Vector mean = ens.draws.rowwise().mean();
    const Matrix second = ens.draws * ens.draws.transpose() / static_cast<double>(S);
    // Var(u_i) = 1/n; mean within 4 se, second moment matrix near I/n.
    for (Index i = 0; i < n; ++i) EXPECT_LT(std::abs(mean[i]), 4.0 * std::sqrt(1.0 / n / S));
    EXPECT_LT((second - Matrix::Identity(n, n) / n).cwiseAbs().maxCoeff(), 0.01);
}

TEST(SphereNull, Errors) {
    EXPECT_THROW(sample_null_sphere(1, 10, 1), std::invalid_argument);
    EXPECT_THROW(sample_null_sphere(3, 0, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Permutation ensemble
// ---------------------------------------------------------------------------

TEST(PermutationNull, ColumnsArePermutations) {
    Vector y(5);
    y << 1.0, 2.0, 3.0, -4.0, 0.5;
    const NullEnsemble ens = permutation_null(y, 200, 2);
    EXPECT_EQ(ens.provenance, NullProvenance::permutation);
    Vector sorted_y = y.normalized();
    std::sort(sorted_y.begin(), sorted_y.end());
    for (Index s = 0; s < 200; ++s) {
        Vector col = ens.draws.col(s);
        std::sort(col.begin(), col.end());
        EXPECT_LT((col - sorted_y).norm(), 1e-14);
    }
}

TEST(PermutationNull, KeyedByContentAndThreadInvariant) {
    Vector y(4);
    y << 3.0, 1.0, 2.0, 5.0;
    const NullEnsemble a = permutation_null(y, 300, 7, 1);
    const NullEnsemble b = permutation_null(y, 300, 7, 3);
    EXPECT_TRUE(a.draws == b.draws);
    Vector y2 = y;
    y2[0] += 1.0;
    EXPECT_NE(permutation_null(y2, 300, 7).key, a.key);
}

TEST(PermutationNull, Errors) {
    EXPECT_THROW(permutation_null(Vector::Constant(4, 2.0), 10, 1), std::invalid_argument);
    EXPECT_THROW(permutation_null(Vector::Ones(1), 10, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Null evaluation, p-values and quantiles
// ---------------------------------------------------------------------------

TEST(EvaluateNull, ThreadInvariantAndPrefix) {
    auto eng = engine(50);
    const Matrix X = gaussian_matrix(eng, 7, 2);
    const FStatistic f(qr_projection(X));
    const NullEnsemble ens = sample_null_sphere(7, 1500, 5);
    const Vector a = evaluate_null(f, ens, -1, 1);
    const Vector b = evaluate_null(f, ens, -1, 3);
    const Vector c = evaluate_null(f, ens, 700, 2);
    EXPECT_TRUE(a == b);
    EXPECT_TRUE(c == a.head(700));
}

TEST(EvaluateNull, NonFiniteIsAnError) {
    const NullEnsemble ens = sample_null_sphere(3, 100, 5);
    EXPECT_THROW(evaluate_null(PoisonedStatistic(3), ens), std::domain_error);
    EXPECT_THROW(evaluate_null(PoisonedStatistic(4), ens), std::invalid_argument);
}

TEST(PValue, CountsTiesAndAddOne) {
    Vector null(5);
    null << 1.0, 2.0, 3.0, 3.0, 4.0;
    PValue p = pvalue_from_null(null, 3.0);
    EXPECT_EQ(p.exceed, 3);
    EXPECT_DOUBLE_EQ(p.p_value, 0.6);
    EXPECT_NEAR(p.mc_se, std::sqrt(0.6 * 0.4 / 5.0), 1e-15);
    p = pvalue_from_null(null, 3.0, true);
    EXPECT_DOUBLE_EQ(p.p_value, 4.0 / 6.0);
    p = pvalue_from_null(null, 3.0, false, 2);
    EXPECT_EQ(p.exceed, 0);
    EXPECT_EQ(p.S, 2);
    p = pvalue_from_null(null, std::numeric_limits<double>::infinity());
    EXPECT_DOUBLE_EQ(p.p_value, 0.0);
    EXPECT_THROW(pvalue_from_null(null, std::numeric_limits<double>::quiet_NaN()), std::domain_error);
    EXPECT_THROW(pvalue_from_null(null, 1.0, false, 6), std::invalid_argument);
}

TEST(Quantile, OrderStatistic) {
    Vector null(100);
    for (Index i = 0; i < 100; ++i) null[i] = static_cast<double>(99 - i);  // 0..99 reversed
    const Quantile q = quantile_from_null(null, 0.05);
    EXPECT_EQ(q.order, 95);
    EXPECT_DOUBLE_EQ(q.value, 94.0);
    EXPECT_TRUE(q.low_count);  // 100 * 0.05 < 10
    EXPECT_FALSE(quantile_from_null(Vector::LinSpaced(1000, 0.0, 1.0), 0.05).low_count);
    EXPECT_THROW(quantile_from_null(null, 0.0), std::invalid_argument);
    EXPECT_THROW(quantile_from_null(null, 1.0), std::invalid_argument);
}

TEST(Quantile, RejectionRateNeverExceedsAlphaOnTheNullDraws) {
    // Exceeding the k-th smallest of S draws happens for at most S - k draws.
    auto eng = engine(51);
    const Vector null = gaussian_vector(eng, 997);
    for (double a : {0.01, 0.05, 0.2}) {
        const Quantile q = quantile_from_null(null, a);
        const Index above = (null.array() > q.value).count();
        EXPECT_LE(static_cast<double>(above), a * 997.0 + 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Exact cone quantile
// ---------------------------------------------------------------------------

TEST(ConeQuantile, MatchesOracle) {
    // tests/oracles/theory_oracle.py
    EXPECT_NEAR(cone_quantile_exact(3, 0.05), 0.9, 1e-14);
    EXPECT_NEAR(cone_quantile_exact(10, 0.05), 0.52140436474283311, 1e-13);
    EXPECT_NEAR(cone_quantile_exact(50, 0.01), 0.32491564938985479, 1e-13);
    EXPECT_NEAR(cone_quantile_exact(400, 0.05), 0.082257602274382107, 1e-13);
}

TEST(ConeQuantile, AgreesWithMonteCarlo) {
    const Index n = 12, S = 40000;
    const NullEnsemble ens = sample_null_sphere(n, S, 33);
    Vector dir = Vector::Zero(n);
    dir[3] = 1.0;
    const Quantile q = mc_quantile(ConeStatistic(dir), ens, 0.05);
    // Density of u_1 near the quantile is bounded by ~1.3 for n = 12; se of
    // the order statistic ~ sqrt(a(1-a)/S) / f.
    EXPECT_NEAR(q.value, cone_quantile_exact(n, 0.05), 4.0 * std::sqrt(0.05 * 0.95 / S) / 0.5);
}

TEST(ConeQuantile, Errors) {
    EXPECT_THROW(cone_quantile_exact(1, 0.05), std::invalid_argument);
    EXPECT_THROW(cone_quantile_exact(5, 0.6), std::invalid_argument);
}
