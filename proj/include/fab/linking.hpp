#pragma once

// Linking-model estimation from held-out groups: common variance, coefficient
// mean and covariance, and hyperparameters of per-group variance models.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fab/core_model.hpp"

namespace fab {

// Sufficient statistics of one nuisance-free group.
struct GroupSummary {
    std::string id;
    Index n = 0;
    Index rank = 0;
    Matrix XtX;
    Vector Xty;
    double e = 0.0;  // |(I - P) y|^2
    Index k = 0;     // n - rank
    bool full_rank = false;
    Vector beta_ols;  // set when full_rank
    Matrix XtX_inv;   // set when full_rank
};

GroupSummary summarize(const GroupData& g);
std::vector<GroupSummary> summarize_all(const std::vector<GroupData>& groups);

struct ResidualSummary {
    std::vector<double> e;
    std::vector<Index> k;

    std::size_t size() const { return e.size(); }
};

// Groups with k_j >= 1 only.
ResidualSummary residual_summary(const std::vector<GroupSummary>& groups);

// sum e_j / sum k_j. Throws std::domain_error when every k_j is zero.
double estimate_sigma2_reml(const std::vector<GroupSummary>& groups);

// (sum X'Sigma^{-1}X)^{-1} sum X'Sigma^{-1}y with Sigma_j = X Psi X' + sigma2 I,
// through (sigma2 I + G Psi)^{-1} G per group. Requires sigma2 > 0.
Vector estimate_beta0_gls(const std::vector<GroupSummary>& groups, const MatrixRef& Psi, double sigma2);

struct PsiEstimate {
    Matrix raw;      // symmetrized moment estimate
    Matrix clipped;  // negative eigenvalues set to zero
    std::vector<std::string> used;
    std::vector<std::string> excluded;  // rank-deficient groups
};

// Mean over full-rank groups of b b' - sigma2 (X'X)^{-1}, b = beta_ols - beta0.
PsiEstimate estimate_psi_moment(const std::vector<GroupSummary>& groups, const VectorRef& beta0,
                                double sigma2);

struct IgFit {
    double alpha = 0.0;
    double beta = 0.0;
};
struct TnFit {
    double mu_z = 0.0;
    double tau2 = 0.0;
    bool boundary = false;  // mu_z = 0 or tau2 = 0 hit
    double residual = 0.0;  // moment-equation residual at the root
};

struct LinkingFit {
    Vector beta0_hat;
    Matrix Psi_hat;
    double sigma2_hat = 0.0;
    std::optional<std::variant<IgFit, TnFit>> variance_fit;
    int iterations = 0;
    bool converged = false;
    bool sigma2_degenerate = false;
    std::vector<std::string> groups_used;
    std::vector<std::string> psi_excluded;
};

struct LinkingOptions {
    int max_iter = 100;
    double tol = 1e-8;
    std::optional<Matrix> Psi_start;  // identity when absent
    std::optional<double> sigma2;     // REML estimate when absent
};

// Alternates GLS for beta0 and the clipped moment estimate of Psi from the
// starting Psi until the relative change of (beta0, Psi) falls below tol.
LinkingFit fit_linking_iterative(const std::vector<GroupSummary>& groups, const LinkingOptions& opt = {});

struct IgMoments {
    double e1 = 0.0;
    double e2 = 0.0;
};
IgMoments ig_moments(const ResidualSummary& summary);

// alpha = (2 e2 - e1^2) / (e2 - e1^2), beta = e1 e2 / (e2 - e1^2).
IgFit fit_ig_from_moments(const IgMoments& m);
IgFit fit_ig_moments(const ResidualSummary& summary);

// Moment fit of sigma^2_j = sigma0sq |z_j|, z_j ~ N(mu_z, tau2), with mu_z >= 0.
TnFit fit_tn_variance(const ResidualSummary& summary, double sigma0sq);

// E|z| for z ~ N(mu, tau2).
double folded_normal_mean(double mu, double tau2);

}  // namespace fab
