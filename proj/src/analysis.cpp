#include "fab/analysis.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "fab/parallel.hpp"
#include "fab/random.hpp"
#include "fab/stat_kernels.hpp"

namespace fab {

// ---------------------------------------------------------------------------
// p-value ratio
// ---------------------------------------------------------------------------

RatioExact pvalue_ratio_exact(Index n, Index p, double c) {
    if (p < 1 || p >= n) throw std::invalid_argument("ratio needs 1 <= p < n");
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("ratio needs 0 < c < 1");
    const double nd = static_cast<double>(n), pd = static_cast<double>(p);
    RatioExact out;
    if (p == 1) {
        out.ratio = 2.0;
    } else {
        const double num = boost::math::ibetac(0.5 * pd, 0.5 * (nd - pd), c);
        const double den = 0.5 * boost::math::ibetac(0.5, 0.5 * (nd - 1.0), c);
        out.ratio = num / den;
    }
    out.lower_bound = 4.0 / (nd - pd) * std::pow(c / (1.0 - c), 0.5 * (pd - 1.0));
    return out;
}

RatioMc pvalue_ratio_mc(const VectorRef& y, const MatrixRef& design, const VectorRef& mu_dir,
                        const NullEnsemble& ens) {
    const double norm = y.norm();
    if (!(norm > 0.0)) throw std::domain_error("degenerate observation");
    const Vector u = y / norm;
    const FStatistic f(qr_projection(design));
    const ConeStatistic cone(mu_dir);
    const PValue pf = pvalue_from_null(evaluate_null(f, ens), f(u));
    const PValue pc = pvalue_from_null(evaluate_null(cone, ens), cone(u));
    RatioMc out;
    out.S = ens.size();
    out.p_f = pf.p_value;
    out.p_cone = pc.p_value;
    out.count_f = pf.exceed;
    out.count_cone = pc.exceed;
    if (pc.exceed == 0) {
        out.ratio = std::numeric_limits<double>::infinity();
        out.se_ratio = std::numeric_limits<double>::infinity();
        return out;
    }
    out.ratio = out.p_f / out.p_cone;
    const double rel_f = out.p_f > 0.0 ? pf.mc_se / out.p_f : 0.0;
    const double rel_c = pc.mc_se / out.p_cone;
    out.se_ratio = out.ratio * std::sqrt(rel_f * rel_f + rel_c * rel_c);
    return out;
}

// ---------------------------------------------------------------------------
// Power simulation
// ---------------------------------------------------------------------------

Index PowerScenario::p() const {
    if (p_rule == DimensionRule::fixed) return static_cast<Index>(std::llround(p_value));
    return static_cast<Index>(std::floor(p_value * static_cast<double>(n)));
}

double PowerScenario::c() const {
    return c_rule == SignalRule::fixed ? c0 : std::pow(static_cast<double>(n), 0.25);
}

double PowerScenario::theta() const {
    const double nd = static_cast<double>(n);
    double dist = 0.0;
    switch (angle_rule) {
        case AngleRule::exact: return 0.0;
        case AngleRule::fixed: return angle_param;
        case AngleRule::quarter_minus: dist = std::pow(nd, -0.25) - angle_param / std::sqrt(nd); break;
        case AngleRule::power_rate: dist = std::pow(nd, -angle_param); break;
    }
    dist = std::clamp(dist, 0.0, 2.0);
    return 2.0 * std::asin(0.5 * dist);
}

void PowerScenario::validate() const {
    const Index pp = p();
    if (pp < 1 || pp >= n) throw std::invalid_argument("scenario needs 1 <= p < n");
    if (!(c() >= 0.0)) throw std::invalid_argument("scenario needs c >= 0");
    const double th = theta();
    if (!(th >= 0.0 && th <= std::numbers::pi)) throw std::invalid_argument("scenario angle outside [0, pi]");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("scenario needs sigma2 > 0");
    if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("scenario needs 0 < alpha < 1/2");
    if (replicates < 1) throw std::invalid_argument("scenario needs replicates >= 1");
}

std::string to_string(PowerTest t) {
    switch (t) {
        case PowerTest::f: return "f";
        case PowerTest::cone: return "cone";
        case PowerTest::fab: return "fab";
    }
    return "?";
}

PowerTest parse_power_test(const std::string& s) {
    if (s == "f") return PowerTest::f;
    if (s == "cone") return PowerTest::cone;
    if (s == "fab") return PowerTest::fab;
    throw std::invalid_argument("unknown power test '" + s + "'");
}

Wilson wilson_interval(Index successes, Index trials, double z) {
    if (trials < 1) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double ph = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double centre = (ph + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double half = z * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double two_proportion_pvalue(Index x1, Index n1, Index x2, Index n2) {
    const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
    const double pool = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(pool * (1.0 - pool) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (!(se > 0.0)) return p1 > p2 ? 0.0 : 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), (p1 - p2) / se));
}

double binomial_upper_pvalue(Index successes, Index trials, double p0) {
    if (successes <= 0) return 1.0;
    const boost::math::binomial_distribution<double> b(static_cast<double>(trials), p0);
    return boost::math::cdf(boost::math::complement(b, static_cast<double>(successes - 1)));
}

namespace {

std::uint64_t scenario_key(const PowerScenario& s) {
    const double fields[] = {static_cast<double>(s.n), static_cast<double>(s.p()), s.c(), s.theta(), s.sigma2};
    return hash_doubles(fields);
}

Matrix random_orthonormal(Index n, Index p, std::mt19937_64& eng) {
    boost::random::normal_distribution<double> normal;
    Matrix G(n, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < n; ++i) G(i, j) = normal(eng);
    Eigen::HouseholderQR<Matrix> qr(G);
    return Matrix(qr.householderQ()).leftCols(p);
}

}  // namespace

PowerEstimate power_simulation(const PowerScenario& scn, PowerTest test, std::uint64_t seed, unsigned threads) {
    scn.validate();
    const Index n = scn.n, p = scn.p();
    const double c = scn.c(), sigma = std::sqrt(scn.sigma2), theta = scn.theta();
    const std::uint64_t key = scenario_key(scn);

    auto design_eng = block_engine(seed, mix_keys(key, hash_string("design")), 0);
    const Matrix X = random_orthonormal(n, p, design_eng);
    const Vector e = X.col(0);
    // Unit vector orthogonal to col(X) for tilting the cone direction.
    Vector g(n);
    fill_unit_vector(design_eng, g);
    Vector f = g - X * (X.transpose() * g);
    f.normalize();
    const Vector mu = std::cos(theta) * e + std::sin(theta) * f;

    const ProjectionPair proj{X, p};
    std::unique_ptr<Statistic> stat;
    double crit = 0.0;
    switch (test) {
        case PowerTest::f: {
            stat = std::make_unique<FStatistic>(proj);
            const boost::math::fisher_f_distribution<double> F(static_cast<double>(p), static_cast<double>(n - p));
            crit = boost::math::quantile(boost::math::complement(F, scn.alpha));
            break;
        }
        case PowerTest::cone:
            stat = std::make_unique<ConeStatistic>(mu);
            crit = cone_quantile_exact(n, scn.alpha);
            break;
        case PowerTest::fab: {
            Vector beta0 = Vector::Zero(p);
            beta0[0] = c;
            stat = std::make_unique<SimplifiedFab>(X, beta0, scn.fab_gamma, scn.sigma2);
            const NullEnsemble ens = sample_null_sphere(n, scn.S_quantile, mix_keys(seed, key), threads);
            crit = quantile_from_null(evaluate_null(*stat, ens, -1, threads), scn.alpha).value;
            break;
        }
    }

    std::vector<char> reject(static_cast<std::size_t>(scn.replicates), 0);
    parallel_for(reject.size(), threads, [&](std::size_t r) {
        auto eng = block_engine(seed, key, r);
        boost::random::normal_distribution<double> normal;
        Vector y(n);
        for (Index i = 0; i < n; ++i) y[i] = sigma * normal(eng);
        y += c * e;
        const Vector u = y / y.norm();
        reject[r] = (*stat)(u) > crit ? 1 : 0;
    });
    PowerEstimate out;
    out.replicates = scn.replicates;
    out.rejections = std::accumulate(reject.begin(), reject.end(), Index{0});
    out.power = static_cast<double>(out.rejections) / static_cast<double>(out.replicates);
    out.se = std::sqrt(out.power * (1.0 - out.power) / static_cast<double>(out.replicates));
    const Wilson w = wilson_interval(out.rejections, out.replicates);
    out.ci_low = w.low;
    out.ci_high = w.high;
    return out;
}

// ---------------------------------------------------------------------------
// Agreement of FAB and F decisions
// ---------------------------------------------------------------------------

GammaAgreement gamma_limit_agreement(const GammaAgreementOptions& opt) {
    if (opt.p < 1 || opt.p >= opt.n) throw std::invalid_argument("agreement needs 1 <= p < n");
    if (opt.replicates < 1) throw std::invalid_argument("agreement needs replicates >= 1");
    const Index n = opt.n, p = opt.p;
    const double sigma = std::sqrt(opt.sigma2);

    auto eng = block_engine(opt.seed, hash_string("agreement-design"), 0);
    boost::random::normal_distribution<double> normal;
    Matrix X(n, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < n; ++i) X(i, j) = normal(eng) / std::sqrt(static_cast<double>(n));
    Vector beta0 = Vector::Zero(p);
    if (!opt.beta0_zero) {
        for (Index j = 0; j < p; ++j) beta0[j] = normal(eng);
        beta0 *= 3.0 * sigma / (X * beta0).norm();
    }

    // Datasets: even index null, odd index alternative around the prior mean.
    Matrix U(n, opt.replicates);
    for (Index r = 0; r < opt.replicates; ++r) {
        auto reng = block_engine(opt.seed, hash_string("agreement-data"), static_cast<std::uint64_t>(r));
        boost::random::normal_distribution<double> z;
        Vector y(n);
        for (Index i = 0; i < n; ++i) y[i] = sigma * z(reng);
        if (r % 2 == 1) {
            Vector delta(p);
            for (Index j = 0; j < p; ++j) delta[j] = z(reng);
            y += X * (beta0 + delta);
        }
        U.col(r) = y / y.norm();
    }

    const NullEnsemble ens = sample_null_sphere(n, opt.S, mix_keys(opt.seed, hash_string("agreement-null")), opt.threads);
    const FStatistic F(qr_projection(X));
    const double qF = quantile_from_null(evaluate_null(F, ens, -1, opt.threads), opt.alpha).value;
    const Vector tF = F.evaluate(U);

    auto agreement = [&](const Statistic& T) {
        const double q = quantile_from_null(evaluate_null(T, ens, -1, opt.threads), opt.alpha).value;
        const Vector t = T.evaluate(U);
        Index same = 0;
        for (Index r = 0; r < opt.replicates; ++r) same += ((t[r] > q) == (tF[r] > qF)) ? 1 : 0;
        return static_cast<double>(same) / static_cast<double>(opt.replicates);
    };

    GammaAgreement out;
    out.gammas = opt.gammas;
    for (double gamma : opt.gammas) out.agreement.push_back(agreement(SimplifiedFab(X, beta0, gamma, opt.sigma2)));
    const Vector mu = X * beta0;
    out.cone_agreement = mu.norm() > 0.0 ? agreement(ConeStatistic(mu / mu.norm()))
                                         : std::numeric_limits<double>::quiet_NaN();
    return out;
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg
// ---------------------------------------------------------------------------

std::vector<std::size_t> bh_fdr(const std::vector<double>& pvalues, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("BH needs 0 < alpha <= 1");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pvalues.size(); ++i) {
        const double v = pvalues[i];
        if (std::isnan(v)) continue;
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("p-values must lie in [0, 1]");
        idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    const double m = static_cast<double>(idx.size());
    std::size_t cut = 0;
    for (std::size_t i = idx.size(); i >= 1; --i) {
        if (pvalues[idx[i - 1]] <= alpha * static_cast<double>(i) / m) {
            cut = i;
            break;
        }
    }
    std::vector<std::size_t> out(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace fab
