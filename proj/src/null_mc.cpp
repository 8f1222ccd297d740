#include "fab/null_mc.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fab/parallel.hpp"
#include "fab/random.hpp"

namespace fab {

namespace {

Index block_count(Index S) { return (S + kDrawsPerBlock - 1) / kDrawsPerBlock; }

constexpr std::uint64_t kSphereTag = 0x5350484552450000ULL;
constexpr std::uint64_t kPermTag = 0x5045524d00000000ULL;

}  // namespace

NullEnsemble sample_null_sphere(Index n, Index S, std::uint64_t seed, unsigned threads) {
    if (n < 2) throw std::invalid_argument("sphere null needs n >= 2");
    if (S < 1) throw std::invalid_argument("sphere null needs S >= 1");
    NullEnsemble ens;
    ens.seed = seed;
    ens.key = mix_keys(kSphereTag, static_cast<std::uint64_t>(n));
    ens.provenance = NullProvenance::gaussian_sphere;
    ens.draws.resize(n, S);
    parallel_for(static_cast<std::size_t>(block_count(S)), threads, [&](std::size_t b) {
        auto eng = block_engine(seed, ens.key, b);
        const Index first = static_cast<Index>(b) * kDrawsPerBlock;
        const Index last = std::min(S, first + kDrawsPerBlock);
        for (Index s = first; s < last; ++s) fill_unit_vector(eng, ens.draws.col(s));
    });
    return ens;
}

NullEnsemble permutation_null(const VectorRef& y, Index S, std::uint64_t seed, unsigned threads) {
    const Index n = y.size();
    if (n < 2) throw std::invalid_argument("permutation null needs length >= 2");
    if (S < 1) throw std::invalid_argument("permutation null needs S >= 1");
    if (!y.allFinite()) throw std::invalid_argument("permutation null: non-finite entries");
    if ((y.array() == y[0]).all()) throw std::invalid_argument("permutation null degenerate");
    const Vector u = y / y.norm();
    NullEnsemble ens;
    ens.seed = seed;
    ens.key = mix_keys(kPermTag, hash_doubles(std::span<const double>(y.data(), static_cast<std::size_t>(n))));
    ens.provenance = NullProvenance::permutation;
    ens.draws.resize(n, S);
    parallel_for(static_cast<std::size_t>(block_count(S)), threads, [&](std::size_t b) {
        auto eng = block_engine(seed, ens.key, b);
        std::vector<Index> idx(static_cast<std::size_t>(n));
        const Index first = static_cast<Index>(b) * kDrawsPerBlock;
        const Index last = std::min(S, first + kDrawsPerBlock);
        for (Index s = first; s < last; ++s) {
            std::iota(idx.begin(), idx.end(), Index{0});
            shuffle_indices(eng, idx);
            for (Index i = 0; i < n; ++i) ens.draws(i, s) = u[idx[static_cast<std::size_t>(i)]];
        }
    });
    return ens;
}

Vector evaluate_null(const Statistic& stat, const NullEnsemble& ens, Index count, unsigned threads) {
    const Index S = count < 0 ? ens.size() : std::min(count, ens.size());
    if (ens.n() != stat.dim()) throw std::invalid_argument("ensemble dimension does not match the statistic");
    Vector out(S);
    // Fixed chunking keeps each value independent of the thread count.
    parallel_for(static_cast<std::size_t>(block_count(S)), threads, [&](std::size_t b) {
        const Index first = static_cast<Index>(b) * kDrawsPerBlock;
        const Index len = std::min(S, first + kDrawsPerBlock) - first;
        out.segment(first, len) = stat.evaluate(ens.draws.middleCols(first, len));
    });
    for (Index s = 0; s < S; ++s)
        if (std::isnan(out[s]) || out[s] == -std::numeric_limits<double>::infinity())
            throw std::domain_error("statistic is not finite on null draw " + std::to_string(s));
    return out;
}

PValue pvalue_from_null(const VectorRef& null_stats, double t_obs, bool add_one, Index S) {
    const Index n = S < 0 ? null_stats.size() : S;
    if (n < 1 || n > null_stats.size()) throw std::invalid_argument("p-value: invalid draw count");
    if (std::isnan(t_obs)) throw std::domain_error("observed statistic is NaN");
    PValue out;
    out.S = n;
    for (Index s = 0; s < n; ++s)
        if (null_stats[s] >= t_obs) ++out.exceed;
    const double p_hat = static_cast<double>(out.exceed) / static_cast<double>(n);
    out.p_value = add_one ? (1.0 + static_cast<double>(out.exceed)) / (1.0 + static_cast<double>(n)) : p_hat;
    out.mc_se = std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n));
    return out;
}

PValue mc_pvalue(const Statistic& stat, const VectorRef& u_obs, const NullEnsemble& ens, bool add_one) {
    return pvalue_from_null(evaluate_null(stat, ens), stat(u_obs), add_one);
}

Quantile quantile_from_null(const VectorRef& null_stats, double alpha, Index S) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    const Index n = S < 0 ? null_stats.size() : S;
    if (n < 1 || n > null_stats.size()) throw std::invalid_argument("quantile: invalid draw count");
    Quantile q;
    q.order = std::clamp<Index>(static_cast<Index>(std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-9)), 1, n);
    std::vector<double> v(null_stats.data(), null_stats.data() + n);
    std::nth_element(v.begin(), v.begin() + (q.order - 1), v.end());
    q.value = v[static_cast<std::size_t>(q.order - 1)];
    q.low_count = static_cast<double>(n) * alpha < 10.0;
    return q;
}

Quantile mc_quantile(const Statistic& stat, const NullEnsemble& ens, double alpha) {
    return quantile_from_null(evaluate_null(stat, ens), alpha);
}

double cone_quantile_exact(Index n, double alpha) {
    if (n < 2) throw std::invalid_argument("cone quantile needs n >= 2");
    if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("cone quantile needs 0 < alpha < 1/2");
    const double b = 0.5 * static_cast<double>(n - 1);
    return std::sqrt(boost::math::ibeta_inv(0.5, b, 1.0 - 2.0 * alpha));
}

}  // namespace fab
