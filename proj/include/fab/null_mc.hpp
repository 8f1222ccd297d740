#pragma once

// Monte Carlo null distributions of direction statistics, p-values and
// critical values.

#include <cstdint>
#include <string>

#include "fab/stat_kernels.hpp"

namespace fab {

enum class NullProvenance { gaussian_sphere, permutation };

struct NullEnsemble {
    Matrix draws;  // n x S, unit columns
    std::uint64_t seed = 0;
    std::uint64_t key = 0;  // stream key (dimension or content hash)
    NullProvenance provenance = NullProvenance::gaussian_sphere;

    Index n() const { return draws.rows(); }
    Index size() const { return draws.cols(); }
};

// S uniform directions in R^n from normalized Gaussian vectors. Draw s comes
// from block s / 256 of the stream (seed, n), so the result does not depend
// on the thread count.
NullEnsemble sample_null_sphere(Index n, Index S, std::uint64_t seed, unsigned threads = 1);

// S normalized random permutations of y; the stream is keyed by a hash of
// the contents of y. Throws for constant y or length < 2.
NullEnsemble permutation_null(const VectorRef& y, Index S, std::uint64_t seed, unsigned threads = 1);

// Statistic on the first `count` draws (all when count < 0). Throws
// std::domain_error naming the first draw with a non-finite value.
Vector evaluate_null(const Statistic& stat, const NullEnsemble& ens, Index count = -1, unsigned threads = 1);

struct PValue {
    double p_value = 1.0;
    double mc_se = 0.0;
    Index exceed = 0;  // #{T_s >= T_obs}
    Index S = 0;
};

// p = #{T_s >= t_obs} / S, or (1 + #) / (1 + S) with add_one. Uses the
// first S entries of null_stats (all when S < 0).
PValue pvalue_from_null(const VectorRef& null_stats, double t_obs, bool add_one = false, Index S = -1);
PValue mc_pvalue(const Statistic& stat, const VectorRef& u_obs, const NullEnsemble& ens, bool add_one = false);

struct Quantile {
    double value = 0.0;
    Index order = 0;          // k = ceil((1 - alpha) S), k-th smallest
    bool low_count = false;   // S * alpha < 10
};

Quantile quantile_from_null(const VectorRef& null_stats, double alpha, Index S = -1);
Quantile mc_quantile(const Statistic& stat, const NullEnsemble& ens, double alpha);

// c with P(u_1 > c) = alpha for u uniform on the sphere in R^n, alpha < 1/2.
double cone_quantile_exact(Index n, double alpha);

struct TestFlags {
    bool powerless = false;
    bool saturated = false;
    bool hypotheses_equivalent = true;
    bool fallback = false;
    bool low_draw_count = false;
};

struct TestResult {
    std::string group_id;
    std::string statistic_kind;
    double statistic = 0.0;
    double p_value = 1.0;  // NaN when powerless
    double mc_se = 0.0;
    double critical_value = 0.0;
    double alpha = 0.05;
    bool decision = false;
    Index S_pvalue = 0;
    Index S_quantile = 0;
    Index n_prime = 0;
    std::uint64_t seed = 0;
    TestFlags flags;
    std::string error;  // non-empty when the test could not be run

    bool ok() const { return error.empty(); }
};

}  // namespace fab
