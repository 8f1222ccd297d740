#include "fab/stat_kernels.hpp"

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fab/random.hpp"
#include "fab/special_functions.hpp"

namespace fab {

namespace {

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Uniform on the open interval (0, 1).
double uniform_open01(std::mt19937_64& eng) {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

const PointMass& require_point_mass(const PriorSpec& prior, const char* who) {
    if (const auto* pm = std::get_if<PointMass>(&prior.variance)) return *pm;
    throw std::invalid_argument(std::string(who) + ": requires a point-mass variance model");
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior specification
// ---------------------------------------------------------------------------

PriorSpec validate(const PriorSpec& prior) {
    const Index p = prior.beta0.size();
    if (prior.Psi.rows() != p || prior.Psi.cols() != p)
        throw std::invalid_argument("prior: Psi must be p x p with p = length(beta0)");
    if (!prior.beta0.allFinite() || !prior.Psi.allFinite())
        throw std::invalid_argument("prior: non-finite entries");
    const double scale = std::max(1.0, prior.Psi.cwiseAbs().maxCoeff() * (p > 0 ? 1.0 : 0.0));
    if (p > 0 && (prior.Psi - prior.Psi.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("prior: Psi is not symmetric");
    if (p > 0 && min_eigenvalue(prior.Psi) < -1e-10 * scale)
        throw std::invalid_argument("prior: Psi is not positive semidefinite");
    if (prior.gamma_scalar && !(*prior.gamma_scalar >= 0.0))
        throw std::invalid_argument("prior: gamma must be >= 0");

    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, PointMass>) {
                if (!(m.sigma2 > 0.0)) throw std::invalid_argument("prior: sigma0^2 must be > 0");
            } else if constexpr (std::is_same_v<T, InverseGamma>) {
                if (!(m.alpha > 0.0 && m.beta > 0.0))
                    throw std::invalid_argument("prior: inverse-gamma parameters must be > 0");
            } else if constexpr (std::is_same_v<T, ScaledHalfNormal>) {
                if (!(m.sigma0sq > 0.0 && m.tau2 > 0.0) || !std::isfinite(m.mu_z))
                    throw std::invalid_argument("prior: truncated-normal parameters invalid");
            } else {
                if (m.draws.empty()) throw std::invalid_argument("prior: empirical variance has no draws");
                for (double d : m.draws)
                    if (!(d > 0.0) || !std::isfinite(d))
                        throw std::invalid_argument("prior: empirical variance draws must be > 0");
            }
        },
        prior.variance);

    PriorSpec out = prior;
    if (p > 0) out.Psi = clip_psd(prior.Psi);
    return out;
}

PriorImage image_of(const PriorSpec& prior, const MatrixRef& design) {
    if (design.cols() != prior.beta0.size())
        throw std::invalid_argument("image_of: design columns do not match beta0");
    PriorImage img;
    img.mean = design * prior.beta0;
    img.coef_cov = design * prior.Psi * design.transpose();
    img.coef_cov = 0.5 * (img.coef_cov + img.coef_cov.transpose());
    return img;
}

// ---------------------------------------------------------------------------
// Angular Gaussian kernel
// ---------------------------------------------------------------------------

Vector Statistic::evaluate(const MatrixRef& U) const {
    Vector out(U.cols());
    for (Index s = 0; s < U.cols(); ++s) out[s] = (*this)(U.col(s));
    return out;
}

Eigen::LLT<Matrix> factor_covariance(const MatrixRef& Sigma) {
    const Index n = Sigma.rows();
    if (n == 0 || Sigma.cols() != n) throw std::invalid_argument("covariance must be square and non-empty");
    if (!Sigma.allFinite()) throw std::domain_error("prior covariance degenerate");
    Eigen::LLT<Matrix> llt(Sigma);
    if (llt.info() == Eigen::Success) return llt;
    // Jitter only rescues rounding; a numerically singular matrix is rejected.
    const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Sigma + Sigma.transpose()), Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(top > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * top)
        throw std::domain_error("prior covariance degenerate");
    const double cap = 1e-8 * std::abs(Sigma.trace()) / static_cast<double>(n);
    for (double jitter = cap * 1e-6; jitter <= cap * (1 + 1e-12); jitter *= 10.0) {
        Matrix S = Sigma;
        S.diagonal().array() += jitter;
        llt.compute(S);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw std::domain_error("prior covariance degenerate");
}

AngularGaussianKernel::AngularGaussianKernel(const VectorRef& mu, const MatrixRef& Sigma) {
    if (mu.size() != Sigma.rows()) throw std::invalid_argument("mu and Sigma differ in dimension");
    auto llt = factor_covariance(Sigma);
    L_ = llt.matrixL();
    w_ = L_.triangularView<Eigen::Lower>().solve(mu);
}

AGKernel AngularGaussianKernel::operator()(const VectorRef& u) const {
    if (u.size() != dim()) throw std::invalid_argument("direction has the wrong dimension");
    const Vector a = L_.triangularView<Eigen::Lower>().solve(u);
    AGKernel k;
    k.n = dim();
    k.x = a.norm();
    k.r = a.dot(w_) / k.x;
    return k;
}

void AngularGaussianKernel::evaluate(const MatrixRef& U, Vector& x, Vector& r) const {
    if (U.rows() != dim()) throw std::invalid_argument("directions have the wrong dimension");
    const Matrix A = L_.triangularView<Eigen::Lower>().solve(U);
    x = A.colwise().norm().transpose();
    r = (A.transpose() * w_).cwiseQuotient(x);
}

AGKernel ag_kernel(const VectorRef& u, const VectorRef& mu, const MatrixRef& Sigma) {
    return AngularGaussianKernel(mu, Sigma)(u);
}

// ---------------------------------------------------------------------------
// FAB and approximate FAB
// ---------------------------------------------------------------------------

namespace {

Matrix full_covariance(const PriorImage& image, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma0^2 must be > 0");
    Matrix S = image.coef_cov;
    S.diagonal().array() += sigma2;
    return S;
}

}  // namespace

double fab_from_kernel(const AGKernel& k) {
    return 0.5 * k.r * k.r + log_In(static_cast<int>(k.n), k.r) - static_cast<double>(k.n) * std::log(k.x);
}

double afab_from_kernel(const AGKernel& k) {
    const double n = static_cast<double>(k.n);
    return 0.25 * k.r * k.r + std::sqrt(n) * k.r - n * std::log(k.x);
}

FabStatistic::FabStatistic(const PriorImage& image, double sigma2)
    : kernel_(image.mean, full_covariance(image, sigma2)) {}

double FabStatistic::operator()(const VectorRef& u) const { return fab_from_kernel(kernel_(u)); }

Vector FabStatistic::evaluate(const MatrixRef& U) const {
    Vector x, r;
    kernel_.evaluate(U, x, r);
    Vector out(U.cols());
    for (Index s = 0; s < U.cols(); ++s) out[s] = fab_from_kernel({x[s], r[s], dim()});
    return out;
}

AfabStatistic::AfabStatistic(const PriorImage& image, double sigma2)
    : kernel_(image.mean, full_covariance(image, sigma2)) {}

double AfabStatistic::operator()(const VectorRef& u) const { return afab_from_kernel(kernel_(u)); }

Vector AfabStatistic::evaluate(const MatrixRef& U) const {
    Vector x, r;
    kernel_.evaluate(U, x, r);
    Vector out(U.cols());
    for (Index s = 0; s < U.cols(); ++s) out[s] = afab_from_kernel({x[s], r[s], dim()});
    return out;
}

double t_fab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design) {
    const auto& pm = require_point_mass(prior, "t_fab");
    return FabStatistic(image_of(prior, design), pm.sigma2)(u);
}

double t_afab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design) {
    const auto& pm = require_point_mass(prior, "t_afab");
    return AfabStatistic(image_of(prior, design), pm.sigma2)(u);
}

// ---------------------------------------------------------------------------
// Prior covariance gamma (X'X)^{-1}
// ---------------------------------------------------------------------------

namespace {

void check_simplified(const MatrixRef& X, const VectorRef& beta0, double gamma, double sigma0sq) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be >= 0");
    if (!(sigma0sq > 0.0)) throw std::invalid_argument("sigma0^2 must be > 0");
    if (X.cols() != beta0.size()) throw std::invalid_argument("X columns do not match beta0");
}

}  // namespace

double t_fab_simplified(const VectorRef& u, const MatrixRef& X, const VectorRef& beta0, double gamma,
                        double sigma0sq) {
    check_simplified(X, beta0, gamma, sigma0sq);
    const ProjectionPair proj = qr_projection(X);
    const Index n = u.size();
    const double w = gamma / (gamma + sigma0sq);
    const double resid2 = std::max(0.0, u.squaredNorm() - proj.projected_norm2(u));
    const double D = 1.0 - w + w * resid2;
    const double sigma0 = std::sqrt(sigma0sq);
    const double s = (1.0 - w) * u.dot(X * beta0) / (sigma0 * std::sqrt(D));
    return static_cast<double>(n) * std::log(sigma0) - 0.5 * static_cast<double>(n) * std::log(D) +
           log_In_quadrature(static_cast<int>(n), s);
}

SimplifiedFab::SimplifiedFab(const MatrixRef& X, const VectorRef& beta0, double gamma, double sigma0sq) {
    check_simplified(X, beta0, gamma, sigma0sq);
    proj_ = qr_projection(X);
    mu_ = X * beta0;
    w_ = gamma / (gamma + sigma0sq);
    sigma0_ = std::sqrt(sigma0sq);
}

double SimplifiedFab::value(double resid2, double mu_dot) const {
    const double n = static_cast<double>(dim());
    const double D = 1.0 - w_ + w_ * resid2;
    const double s = (1.0 - w_) * mu_dot / (sigma0_ * std::sqrt(D));
    return n * std::log(sigma0_) - 0.5 * n * std::log(D) + log_In(static_cast<int>(dim()), s) + 0.5 * s * s;
}

double SimplifiedFab::operator()(const VectorRef& u) const {
    const double resid2 = std::max(0.0, u.squaredNorm() - proj_.projected_norm2(u));
    return value(resid2, u.dot(mu_));
}

Vector SimplifiedFab::evaluate(const MatrixRef& U) const {
    const Vector total = U.colwise().squaredNorm().transpose();
    const Vector explained =
        proj_.rank == 0 ? Vector::Zero(U.cols()) : Vector((proj_.basis.transpose() * U).colwise().squaredNorm().transpose());
    const Vector dots = U.transpose() * mu_;
    Vector out(U.cols());
    for (Index s = 0; s < U.cols(); ++s) out[s] = value(std::max(0.0, total[s] - explained[s]), dots[s]);
    return out;
}

// ---------------------------------------------------------------------------
// Cone and F
// ---------------------------------------------------------------------------

double cone_statistic(const VectorRef& u, const VectorRef& mu_dir) {
    if (u.size() != mu_dir.size()) throw std::invalid_argument("cone: dimension mismatch");
    const double norm = mu_dir.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("cone: direction must be non-zero");
    return u.dot(mu_dir) / norm;
}

ConeStatistic::ConeStatistic(const VectorRef& mu_dir) : dir_(mu_dir) {
    const double norm = dir_.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("cone: direction must be non-zero");
    dir_ /= norm;
}

double ConeStatistic::operator()(const VectorRef& u) const { return u.dot(dir_); }

Vector ConeStatistic::evaluate(const MatrixRef& U) const { return U.transpose() * dir_; }

FStatistic::FStatistic(ProjectionPair proj) : proj_(std::move(proj)) {
    if (proj_.rank == 0 || proj_.rank >= proj_.dim())
        throw std::domain_error("F-test degenerate: power equals level");
}

double FStatistic::operator()(const VectorRef& u) const { return f_statistic(u, proj_); }

Vector FStatistic::evaluate(const MatrixRef& U) const {
    const Vector total = U.colwise().squaredNorm().transpose();
    const Vector explained = (proj_.basis.transpose() * U).colwise().squaredNorm().transpose();
    const double n = static_cast<double>(proj_.dim());
    const double p = static_cast<double>(proj_.rank);
    Vector out(U.cols());
    for (Index s = 0; s < U.cols(); ++s) {
        const double frac = explained[s] / total[s];
        const double rest = 1.0 - frac;
        out[s] = rest <= 4.0 * std::numeric_limits<double>::epsilon() ? std::numeric_limits<double>::infinity()
                                                                      : ((n - p) / p) * frac / rest;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Variance mixtures
// ---------------------------------------------------------------------------

std::vector<double> variance_draws(const VarianceModel& model, int draws, std::uint64_t subseed) {
    if (draws < 1) throw std::invalid_argument("variance mixture needs at least one draw");
    if (const auto* emp = std::get_if<EmpiricalVariance>(&model)) return emp->draws;
    if (const auto* pm = std::get_if<PointMass>(&model)) return std::vector<double>(1, pm->sigma2);

    auto eng = block_engine(subseed, hash_string("variance-draws"), 0);
    std::vector<double> out(static_cast<std::size_t>(draws));
    const double K = static_cast<double>(draws);
    for (int k = 0; k < draws; ++k) {
        const double q = (static_cast<double>(k) + uniform_open01(eng)) / K;
        if (const auto* ig = std::get_if<InverseGamma>(&model)) {
            out[k] = boost::math::quantile(boost::math::inverse_gamma_distribution<double>(ig->alpha, ig->beta), q);
        } else {
            const auto& tn = std::get<ScaledHalfNormal>(model);
            const double z = tn.mu_z + std::sqrt(tn.tau2) * boost::math::quantile(boost::math::normal_distribution<double>(), q);
            out[k] = tn.sigma0sq * std::abs(z);
        }
        if (!(out[k] > 0.0)) out[k] = std::numeric_limits<double>::min();
    }
    return out;
}

MixtureKernel::MixtureKernel(const PriorImage& image) : n_(image.mean.size()) {
    if (image.coef_cov.rows() != n_ || image.coef_cov.cols() != n_)
        throw std::invalid_argument("mixture: prior image shapes disagree");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (image.coef_cov + image.coef_cov.transpose()));
    const Vector& ev = eig.eigenvalues();
    const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
    std::vector<Index> keep;
    for (Index i = 0; i < ev.size(); ++i)
        if (ev[i] > 1e-12 * top && ev[i] > 0.0) keep.push_back(i);
    V_.resize(n_, static_cast<Index>(keep.size()));
    lambda_.resize(static_cast<Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        V_.col(static_cast<Index>(j)) = eig.eigenvectors().col(keep[j]);
        lambda_[static_cast<Index>(j)] = ev[keep[j]];
    }
    m_ = V_.transpose() * image.mean;
    mu_rest2_ = std::max(0.0, image.mean.squaredNorm() - m_.squaredNorm());
    mu_ = image.mean;
}

MixtureKernel::Coordinates MixtureKernel::prepare(const VectorRef& u) const {
    if (u.size() != n_) throw std::invalid_argument("direction has the wrong dimension");
    Coordinates c;
    c.a = V_.transpose() * u;
    c.rest2 = std::max(0.0, u.squaredNorm() - c.a.squaredNorm());
    c.cross_rest = u.dot(mu_) - c.a.dot(m_);
    return c;
}

double MixtureKernel::log_term(const Coordinates& c, double sigma2) const {
    const Index q = lambda_.size();
    double x2 = c.rest2 / sigma2;
    double cross = c.cross_rest / sigma2;
    double quad = mu_rest2_ / sigma2;
    double logdet = static_cast<double>(n_ - q) * std::log(sigma2);
    for (Index i = 0; i < q; ++i) {
        const double d = lambda_[i] + sigma2;
        x2 += c.a[i] * c.a[i] / d;
        cross += c.a[i] * m_[i] / d;
        quad += m_[i] * m_[i] / d;
        logdet += std::log(d);
    }
    const double x = std::sqrt(x2);
    const double r = cross / x;
    return -0.5 * logdet - static_cast<double>(n_) * std::log(x) + log_In(static_cast<int>(n_), r) +
           0.5 * (r * r - quad);
}

VarianceMixtureFab::VarianceMixtureFab(const PriorImage& image, std::vector<double> sigma2_draws)
    : kernel_(image), draws_(std::move(sigma2_draws)) {
    if (draws_.empty()) throw std::invalid_argument("variance mixture needs at least one draw");
    for (double d : draws_)
        if (!(d > 0.0)) throw std::invalid_argument("variance draws must be > 0");
}

double VarianceMixtureFab::operator()(const VectorRef& u) const {
    const auto c = kernel_.prepare(u);
    std::vector<double> terms(draws_.size());
    for (std::size_t k = 0; k < draws_.size(); ++k) terms[k] = kernel_.log_term(c, draws_[k]);
    return log_sum_exp(terms) - std::log(static_cast<double>(draws_.size()));
}

double t_varmix_fab(const VectorRef& u, const PriorSpec& prior, const MatrixRef& design, int draws,
                    std::uint64_t subseed) {
    if (std::holds_alternative<PointMass>(prior.variance))
        throw std::invalid_argument("t_varmix_fab: point-mass variance model, use t_fab");
    return VarianceMixtureFab(image_of(prior, design), variance_draws(prior.variance, draws, subseed))(u);
}

double ig_mixture_quadrature(const VectorRef& u, const PriorImage& image, double alpha, double beta) {
    if (!(alpha > 0.0 && beta > 0.0)) throw std::invalid_argument("inverse-gamma parameters must be > 0");
    const MixtureKernel kernel(image);
    const auto c = kernel.prepare(u);
    const boost::math::inverse_gamma_distribution<double> ig(alpha, beta);
    const double log_norm = alpha * std::log(beta) - std::lgamma(alpha);
    // Integrand in t = log sigma^2, including the Jacobian e^t.
    auto log_f = [&](double t) {
        const double s2 = std::exp(t);
        return kernel.log_term(c, s2) + log_norm - alpha * t - beta / s2;
    };
    const double t_lo = std::log(boost::math::quantile(ig, 1e-14));
    const double t_hi = std::log(boost::math::quantile(boost::math::complement(ig, 1e-14)));
    constexpr int kPieces = 64;
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 4 * kPieces; ++i) peak = std::max(peak, log_f(t_lo + (t_hi - t_lo) * i / (4.0 * kPieces)));
    auto f = [&](double t) {
        const double v = log_f(t) - peak;
        return v < -745.0 ? 0.0 : std::exp(v);
    };
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    double total = 0.0;
    const double h = (t_hi - t_lo) / kPieces;
    for (int i = 0; i < kPieces; ++i) total += GK::integrate(f, t_lo + i * h, t_lo + (i + 1) * h, 8, 1e-10);
    return peak + std::log(total);
}

}  // namespace fab
