#pragma once

// Multigroup FAB procedure: hold out the focal group(s), fit the linking
// model on the rest, build the prior and calibrate against a Monte Carlo null
// of the reduced direction.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fab/linking.hpp"
#include "fab/null_mc.hpp"

namespace fab {

enum class StatisticKind { fab, afab, igfab, tnfab, f, cone };
enum class LinkingMode { leave_one_out, shared };
enum class NullKind { sphere, permutation };

std::string to_string(StatisticKind k);
std::string to_string(LinkingMode m);
std::string to_string(NullKind k);
StatisticKind parse_statistic(const std::string& s);
LinkingMode parse_linking_mode(const std::string& s);
NullKind parse_null_kind(const std::string& s);

// Fixed values that replace the corresponding linking estimates.
struct PriorOverride {
    std::optional<Vector> beta0;
    std::optional<Matrix> Psi;
    std::optional<double> gamma;  // Psi = gamma (X'X)^{-1} of the focal reduced design
    std::optional<double> sigma0sq;
    std::optional<InverseGamma> ig;
    std::optional<double> tn_mu_z;
    std::optional<double> tn_tau2;

    bool fixes_coefficients() const { return beta0.has_value() && (Psi.has_value() || gamma.has_value()); }
};

struct TestConfig {
    double alpha = 0.05;
    std::uint64_t seed = 20240601;
    Index S_pvalue = 10000;
    Index S_quantile = 4000;
    StatisticKind statistic = StatisticKind::fab;
    LinkingMode mode = LinkingMode::leave_one_out;
    NullKind null_kind = NullKind::sphere;
    int mixture_draws = 100;
    bool add_one = false;
    bool f_fallback = true;      // F test when the linking fit fails
    bool force_fallback = false;  // always take the fallback path
    int max_iter = 100;
    double tol = 1e-8;
    unsigned threads = 1;
    PriorOverride prior;
};

// Validates alpha, draw counts and statistic/override combinations.
void validate(const TestConfig& config);

// Prior actually used for a test; reported alongside the result.
struct PriorUsed {
    Vector beta0;
    Matrix Psi;
    double sigma0sq = 0.0;
    std::string variance;  // point_mass, inverse_gamma or truncated_normal
    std::vector<double> variance_params;  // (alpha, beta) or (mu_z, tau2)
    int linking_iterations = 0;
    bool linking_converged = false;
    Index linking_groups = 0;
};

struct GroupTest {
    TestResult result;
    std::optional<PriorUsed> prior;
    LinkingMode mode = LinkingMode::leave_one_out;
};

// Sphere ensembles shared across tests with the same reduced dimension.
class EnsembleCache {
public:
    EnsembleCache(std::uint64_t seed, Index S, unsigned threads = 1);
    const NullEnsemble& sphere(Index n);

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

GroupTest fab_test_group(const std::vector<GroupData>& groups, Index focal, const TestConfig& config);
GroupTest fab_test_linear(const std::vector<GroupData>& groups, const LinearHypothesis& h,
                          const TestConfig& config);

struct RunResult {
    std::vector<GroupTest> tests;       // input order
    std::optional<LinkingFit> shared_fit;  // shared mode only
};

// Tests every group. Per-group failures are recorded in the result, not
// thrown.
RunResult run_all_groups(const std::vector<GroupData>& groups, const TestConfig& config);

}  // namespace fab
