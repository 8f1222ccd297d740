#pragma once

// Theory checks: exact p-value ratios of the F and cone tests, power
// simulations over model sequences, agreement of FAB and F decisions as the
// prior covariance grows, and Benjamini-Hochberg.

#include <cstdint>
#include <string>
#include <vector>

#include "fab/null_mc.hpp"

namespace fab {

// ---------------------------------------------------------------------------
// p-value ratio
// ---------------------------------------------------------------------------

struct RatioExact {
    double ratio = 0.0;        // P(B_{p/2,(n-p)/2} > c) / (P(B_{1/2,(n-1)/2} > c) / 2)
    double lower_bound = 0.0;  // 4/(n-p) (c/(1-c))^{(p-1)/2}
};

RatioExact pvalue_ratio_exact(Index n, Index p, double c);

struct RatioMc {
    double p_f = 0.0;
    double p_cone = 0.0;
    double ratio = 0.0;  // +inf when p_cone is 0
    double se_ratio = 0.0;
    Index count_f = 0;
    Index count_cone = 0;
    Index S = 0;
};

// F and cone p-values of y on a shared ensemble.
RatioMc pvalue_ratio_mc(const VectorRef& y, const MatrixRef& design, const VectorRef& mu_dir,
                        const NullEnsemble& ens);

// ---------------------------------------------------------------------------
// Power simulation
// ---------------------------------------------------------------------------

enum class DimensionRule { fixed, ratio };         // p = p0 or floor(gamma n)
enum class SignalRule { fixed, fourth_root };      // c = c0 or n^{1/4}
// Misspecification of the cone direction, as the angle theta between mu and
// v = X beta. |mu - v/|v|| = 2 sin(theta/2).
enum class AngleRule {
    exact,          // theta = 0
    fixed,          // theta = theta0
    quarter_minus,  // |mu - v/|v|| = n^{-1/4} - a n^{-1/2}
    power_rate,     // |mu - v/|v|| = n^{-kappa}
};

struct PowerScenario {
    Index n = 100;
    DimensionRule p_rule = DimensionRule::fixed;
    double p_value = 2;  // p0 or gamma
    SignalRule c_rule = SignalRule::fixed;
    double c0 = 0.0;
    AngleRule angle_rule = AngleRule::exact;
    double angle_param = 0.0;  // theta0, a or kappa
    double sigma2 = 1.0;
    double alpha = 0.05;
    Index replicates = 1000;
    double fab_gamma = 1.0;   // FAB prior: Psi = gamma (X'X)^{-1}, X beta0 = c mu
    Index S_quantile = 4000;  // FAB critical value draws

    Index p() const;
    double c() const;
    double theta() const;
    void validate() const;
};

enum class PowerTest { f, cone, fab };
std::string to_string(PowerTest t);
PowerTest parse_power_test(const std::string& s);

struct PowerEstimate {
    double power = 0.0;
    double se = 0.0;
    double ci_low = 0.0;  // Wilson 95%
    double ci_high = 0.0;
    Index rejections = 0;
    Index replicates = 0;
};

// Empirical rejection rate. One random orthonormal design per scenario;
// replicate r draws its noise from the stream keyed by (seed, scenario, r).
PowerEstimate power_simulation(const PowerScenario& scn, PowerTest test, std::uint64_t seed, unsigned threads = 1);

struct Wilson {
    double low = 0.0;
    double high = 0.0;
};
Wilson wilson_interval(Index successes, Index trials, double z = 1.959963984540054);

// One-sided two-proportion z test of H: p1 <= p2; returns the p-value.
double two_proportion_pvalue(Index x1, Index n1, Index x2, Index n2);
// One-sided exact binomial test of H: rate <= p0 against rate > p0.
double binomial_upper_pvalue(Index successes, Index trials, double p0);

// ---------------------------------------------------------------------------
// Agreement of FAB and F decisions
// ---------------------------------------------------------------------------

struct GammaAgreementOptions {
    Index n = 20;
    Index p = 4;
    std::vector<double> gammas;
    Index replicates = 1000;
    std::uint64_t seed = 1;
    bool beta0_zero = false;
    double sigma2 = 1.0;
    double alpha = 0.05;
    Index S = 4000;
    unsigned threads = 1;
};

struct GammaAgreement {
    std::vector<double> gammas;
    std::vector<double> agreement;  // FAB vs F decision agreement per gamma
    double cone_agreement = 0.0;    // cone vs F on the same datasets
};

// Half the datasets are null, half alternatives with X beta = X beta0 + noise.
// Critical values are Monte Carlo quantiles on one shared ensemble.
GammaAgreement gamma_limit_agreement(const GammaAgreementOptions& opt);

// ---------------------------------------------------------------------------
// Benjamini-Hochberg
// ---------------------------------------------------------------------------

// Indices (ascending) of rejected hypotheses. NaN entries are not tested and
// do not count toward m. Throws for p-values outside [0, 1].
std::vector<std::size_t> bh_fdr(const std::vector<double>& pvalues, double alpha);

}  // namespace fab
