#pragma once

// Test-statistic kernels on the unit sphere. Every statistic is a function of
// the direction u = y / |y| alone, given a fixed prior.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fab/core_model.hpp"

namespace fab {

// ---------------------------------------------------------------------------
// Prior specification
// ---------------------------------------------------------------------------

struct PointMass {
    double sigma2 = 1.0;
};
struct InverseGamma {
    double alpha = 3.0;
    double beta = 2.0;
};
// sigma^2 = sigma0sq * |z| with z ~ N(mu_z, tau2).
struct ScaledHalfNormal {
    double sigma0sq = 1.0;
    double mu_z = 0.0;
    double tau2 = 1.0;
};
struct EmpiricalVariance {
    std::vector<double> draws;
};

using VarianceModel = std::variant<PointMass, InverseGamma, ScaledHalfNormal, EmpiricalVariance>;

struct PriorSpec {
    Vector beta0;
    Matrix Psi;
    VarianceModel variance = PointMass{};
    std::optional<double> gamma_scalar;  // Psi = gamma (X'X)^{-1} family
};

// Checks shapes and positivity, then returns a copy with Psi symmetrized and
// eigen-clipped at zero. Psi asymmetry above 1e-10 or an eigenvalue below
// -1e-10 (relative) is an error.
PriorSpec validate(const PriorSpec& prior);

// Prior image for a single-block design with no offset.
PriorImage image_of(const PriorSpec& prior, const MatrixRef& design);

// ---------------------------------------------------------------------------
// Statistic interface
// ---------------------------------------------------------------------------

class Statistic {
public:
    virtual ~Statistic() = default;
    virtual Index dim() const = 0;
    virtual double operator()(const VectorRef& u) const = 0;
    // Column-wise evaluation over an n x S matrix of directions.
    virtual Vector evaluate(const MatrixRef& U) const;
};

struct AGKernel {
    double x = 1.0;  // sqrt(u' Sigma^{-1} u)
    double r = 0.0;  // u' Sigma^{-1} mu / x
    Index n = 0;
};

// Cholesky of Sigma with jitter up to 1e-8 * trace / n; throws
// std::domain_error("prior covariance degenerate") beyond that.
Eigen::LLT<Matrix> factor_covariance(const MatrixRef& Sigma);

AGKernel ag_kernel(const VectorRef& u, const VectorRef& mu, const MatrixRef& Sigma);

class AngularGaussianKernel {
public:
    AngularGaussianKernel(const VectorRef& mu, const MatrixRef& Sigma);
    AGKernel operator()(const VectorRef& u) const;
    // x and r for every column of U.
    void evaluate(const MatrixRef& U, Vector& x, Vector& r) const;
    Index dim() const { return w_.size(); }
    double mu_norm2() const { return w_.squaredNorm(); }  // mu' Sigma^{-1} mu

private:
    Matrix L_;
    Vector w_;  // L^{-1} mu
};

// ---------------------------------------------------------------------------
// FAB and approximate FAB
// ---------------------------------------------------------------------------

// r^2/2 + log I_n(r) - n log x with Sigma = coef_cov + sigma2 I.
class FabStatistic : public Statistic {
public:
    FabStatistic(const PriorImage& image, double sigma2);
    Index dim() const override { return kernel_.dim(); }
    double operator()(const VectorRef& u) const override;
    Vector evaluate(const MatrixRef& U) const override;
    const AngularGaussianKernel& kernel() const { return kernel_; }

private:
    AngularGaussianKernel kernel_;
};

// r^2/4 + sqrt(n) r - n log x.
class AfabStatistic : public Statistic {
public:
    AfabStatistic(const PriorImage& image, double sigma2);
    Index dim() const override { return kernel_.dim(); }
    double operator()(const VectorRef& u) const override;
    Vector evaluate(const MatrixRef& U) const override;

private:
    AngularGaussianKernel kernel_;
};

double fab_from_kernel(const AGKernel& k);
double afab_from_kernel(const AGKernel& k);

// Point-mass prior only; otherwise std::invalid_argument.
double t_fab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design);
double t_afab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design);

// ---------------------------------------------------------------------------
// Prior covariance gamma (X'X)^{-1}
// ---------------------------------------------------------------------------

// n log sigma0 - (n/2) log D + log int_0^inf z^{n-1} exp(-z^2/2 + s z) dz with
// w = gamma / (gamma + sigma0sq), D = 1 - w + w |(I - P)u|^2 and
// s = (1 - w) u'X beta0 / (sigma0 sqrt(D)). The integral is done by
// quadrature. Equals t_fab for the matching full prior.
double t_fab_simplified(const VectorRef& u, const MatrixRef& X, const VectorRef& beta0, double gamma,
                        double sigma0sq);

// Same value through the I_n recurrence; cost O(n p) per direction.
class SimplifiedFab : public Statistic {
public:
    SimplifiedFab(const MatrixRef& X, const VectorRef& beta0, double gamma, double sigma0sq);
    Index dim() const override { return proj_.dim(); }
    double operator()(const VectorRef& u) const override;
    Vector evaluate(const MatrixRef& U) const override;

private:
    double value(double resid2, double mu_dot) const;
    ProjectionPair proj_;
    Vector mu_;  // X beta0
    double w_;
    double sigma0_;
};

// ---------------------------------------------------------------------------
// Cone and F
// ---------------------------------------------------------------------------

double cone_statistic(const VectorRef& u, const VectorRef& mu_dir);

class ConeStatistic : public Statistic {
public:
    explicit ConeStatistic(const VectorRef& mu_dir);
    Index dim() const override { return dir_.size(); }
    double operator()(const VectorRef& u) const override;
    Vector evaluate(const MatrixRef& U) const override;

private:
    Vector dir_;
};

// F statistic of a unit vector against a fixed projection.
class FStatistic : public Statistic {
public:
    explicit FStatistic(ProjectionPair proj);
    Index dim() const override { return proj_.dim(); }
    double operator()(const VectorRef& u) const override;
    Vector evaluate(const MatrixRef& U) const override;
    const ProjectionPair& projection() const { return proj_; }

private:
    ProjectionPair proj_;
};

// ---------------------------------------------------------------------------
// Variance mixtures
// ---------------------------------------------------------------------------

// Stratified draws sigma^2_k = F^{-1}((k + U_k) / K) from the variance model,
// U_k driven by subseed. Empirical models return their stored draws.
std::vector<double> variance_draws(const VarianceModel& model, int draws, std::uint64_t subseed);

// Per-direction log kernel of the mixture integrand
//   -1/2 log|Sigma| - n log x + log I_n(r) + (r^2 - mu'Sigma^{-1}mu)/2
// for Sigma = coef_cov + sigma^2 I, through an eigendecomposition of
// coef_cov so that each sigma^2 costs O(rank).
class MixtureKernel {
public:
    explicit MixtureKernel(const PriorImage& image);

    struct Coordinates {
        Vector a;           // V' u on the non-null eigenvectors
        double rest2;       // |u|^2 - |a|^2
        double cross_rest;  // u'mu - a'm
    };
    Coordinates prepare(const VectorRef& u) const;
    double log_term(const Coordinates& c, double sigma2) const;
    Index dim() const { return n_; }

private:
    Index n_;
    Matrix V_;       // n x q, eigenvectors of coef_cov with positive eigenvalue
    Vector lambda_;  // q
    Vector m_;       // V' mu
    Vector mu_;
    double mu_rest2_;
};

// log of the average of exp(log_term) over the draws.
class VarianceMixtureFab : public Statistic {
public:
    VarianceMixtureFab(const PriorImage& image, std::vector<double> sigma2_draws);
    Index dim() const override { return kernel_.dim(); }
    double operator()(const VectorRef& u) const override;

private:
    MixtureKernel kernel_;
    std::vector<double> draws_;
};

// Throws std::invalid_argument for a point-mass variance model.
double t_varmix_fab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design, int draws,
                    std::uint64_t subseed);

// Inverse-gamma mixture integral by adaptive quadrature over log sigma^2.
double ig_mixture_quadrature(const VectorRef& u, const PriorImage& image, double alpha, double beta);

}  // namespace fab
