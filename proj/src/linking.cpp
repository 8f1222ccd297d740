#include "fab/linking.hpp"

#include <boost/math/tools/roots.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace fab {

GroupSummary summarize(const GroupData& g) {
    validate(g);
    if (g.has_nuisance()) throw std::invalid_argument("summarize: project out nuisance covariates first");
    GroupSummary s;
    s.id = g.id;
    s.n = g.n();
    s.XtX = g.X.transpose() * g.X;
    s.Xty = g.X.transpose() * g.y;
    if (g.p() == 0) {
        s.rank = 0;
        s.e = g.y.squaredNorm();
    } else {
        const ProjectionPair proj = qr_projection(g.X);
        s.rank = proj.rank;
        s.e = proj.residual(g.y).squaredNorm();
    }
    s.k = s.n - s.rank;
    s.full_rank = g.p() > 0 && s.rank == g.p();
    if (s.full_rank) {
        Eigen::ColPivHouseholderQR<Matrix> qr(g.X);
        s.beta_ols = qr.solve(g.y);
        s.XtX_inv = s.XtX.llt().solve(Matrix::Identity(g.p(), g.p()));
        s.XtX_inv = 0.5 * (s.XtX_inv + s.XtX_inv.transpose());
    }
    return s;
}

std::vector<GroupSummary> summarize_all(const std::vector<GroupData>& groups) {
    std::vector<GroupSummary> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(summarize(g));
    return out;
}

ResidualSummary residual_summary(const std::vector<GroupSummary>& groups) {
    ResidualSummary r;
    for (const auto& g : groups) {
        if (g.k < 1) continue;
        r.e.push_back(g.e);
        r.k.push_back(g.k);
    }
    return r;
}

double estimate_sigma2_reml(const std::vector<GroupSummary>& groups) {
    double e = 0.0;
    Index k = 0;
    for (const auto& g : groups) {
        e += g.e;
        k += g.k;
    }
    if (k < 1) throw std::domain_error("no residual degrees of freedom");
    return e / static_cast<double>(k);
}

Vector estimate_beta0_gls(const std::vector<GroupSummary>& groups, const MatrixRef& Psi, double sigma2) {
    if (groups.empty()) throw std::invalid_argument("GLS: no groups");
    if (!(sigma2 > 0.0)) throw std::domain_error("GLS: sigma^2 must be > 0");
    const Index p = groups.front().XtX.rows();
    if (Psi.rows() != p || Psi.cols() != p) throw std::invalid_argument("GLS: Psi has the wrong shape");
    Matrix info = Matrix::Zero(p, p);
    Vector rhs = Vector::Zero(p);
    for (const auto& g : groups) {
        if (g.XtX.rows() != p) throw std::invalid_argument("GLS: groups differ in covariate count");
        Matrix M = g.XtX * Psi;
        M.diagonal().array() += sigma2;
        Eigen::PartialPivLU<Matrix> lu(M);
        info.noalias() += lu.solve(g.XtX);
        rhs.noalias() += lu.solve(g.Xty);
    }
    info = 0.5 * (info + info.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    const double floor = 1e-10 * std::max(top, 1e-300);
    std::ostringstream bad;
    int deficient = 0;
    for (Index i = 0; i < p; ++i) {
        if (eig.eigenvalues()[i] > floor) continue;
        ++deficient;
        bad << (deficient > 1 ? "; " : "") << "[";
        for (Index j = 0; j < p; ++j) bad << (j ? ", " : "") << eig.eigenvectors()(j, i);
        bad << "]";
    }
    if (deficient > 0)
        throw std::domain_error("GLS information matrix is singular along " + bad.str());
    return info.ldlt().solve(rhs);
}

PsiEstimate estimate_psi_moment(const std::vector<GroupSummary>& groups, const VectorRef& beta0,
                                double sigma2) {
    const Index p = beta0.size();
    PsiEstimate out;
    Matrix acc = Matrix::Zero(p, p);
    for (const auto& g : groups) {
        if (!g.full_rank) {
            out.excluded.push_back(g.id);
            continue;
        }
        if (g.beta_ols.size() != p) throw std::invalid_argument("Psi moment: groups differ in covariate count");
        const Vector b = g.beta_ols - beta0;
        acc.noalias() += b * b.transpose();
        acc.noalias() -= sigma2 * g.XtX_inv;
        out.used.push_back(g.id);
    }
    if (out.used.empty()) throw std::domain_error("Psi moment: no groups with full-rank design");
    acc /= static_cast<double>(out.used.size());
    out.raw = 0.5 * (acc + acc.transpose());
    out.clipped = clip_psd(out.raw);
    return out;
}

LinkingFit fit_linking_iterative(const std::vector<GroupSummary>& groups, const LinkingOptions& opt) {
    if (groups.size() < 2) throw std::invalid_argument("linking fit needs at least two groups");
    if (opt.max_iter < 1) throw std::invalid_argument("linking fit needs max_iter >= 1");
    const Index p = groups.front().XtX.rows();
    LinkingFit fit;
    fit.sigma2_hat = opt.sigma2 ? *opt.sigma2 : estimate_sigma2_reml(groups);
    fit.sigma2_degenerate = !(fit.sigma2_hat > 0.0);
    if (fit.sigma2_degenerate) throw std::domain_error("linking fit: residual variance is zero");
    for (const auto& g : groups) fit.groups_used.push_back(g.id);

    Matrix Psi = opt.Psi_start ? *opt.Psi_start : Matrix::Identity(p, p);
    Vector beta;
    for (int it = 1; it <= opt.max_iter; ++it) {
        const Vector beta_new = estimate_beta0_gls(groups, Psi, fit.sigma2_hat);
        PsiEstimate est = estimate_psi_moment(groups, beta_new, fit.sigma2_hat);
        const double d_beta = it == 1 ? 0.0 : (beta_new - beta).squaredNorm();
        const double change = std::sqrt(d_beta + (est.clipped - Psi).squaredNorm());
        const double scale = std::sqrt(beta_new.squaredNorm() + est.clipped.squaredNorm());
        beta = beta_new;
        Psi = est.clipped;
        fit.psi_excluded = std::move(est.excluded);
        fit.iterations = it;
        if (change <= opt.tol * std::max(1.0, scale)) {
            fit.converged = true;
            break;
        }
    }
    fit.beta0_hat = beta;
    fit.Psi_hat = Psi;
    return fit;
}

IgMoments ig_moments(const ResidualSummary& summary) {
    const std::size_t m = summary.size();
    if (m < 2) throw std::invalid_argument("inverse-gamma fit needs at least two groups");
    IgMoments out;
    for (std::size_t j = 0; j < m; ++j) {
        const double k = static_cast<double>(summary.k[j]);
        if (k < 1) throw std::invalid_argument("inverse-gamma fit: group with no residual degrees of freedom");
        out.e1 += summary.e[j] / k;
        out.e2 += summary.e[j] * summary.e[j] / (2.0 * k + k * k);
    }
    out.e1 /= static_cast<double>(m);
    out.e2 /= static_cast<double>(m);
    return out;
}

IgFit fit_ig_from_moments(const IgMoments& m) {
    const double spread = m.e2 - m.e1 * m.e1;
    if (!(spread > 0.0))
        throw std::domain_error(
            "variance model degenerate: under-dispersed residuals; use the point-mass variance model");
    IgFit fit;
    fit.alpha = (2.0 * m.e2 - m.e1 * m.e1) / spread;
    fit.beta = m.e1 * m.e2 / spread;
    return fit;
}

IgFit fit_ig_moments(const ResidualSummary& summary) { return fit_ig_from_moments(ig_moments(summary)); }

double folded_normal_mean(double mu, double tau2) {
    if (!(tau2 > 0.0)) return std::abs(mu);
    const double tau = std::sqrt(tau2);
    return tau * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * mu * mu / tau2) +
           mu * std::erf(mu / (tau * std::numbers::sqrt2));
}

TnFit fit_tn_variance(const ResidualSummary& summary, double sigma0sq) {
    if (summary.size() < 10) throw std::invalid_argument("truncated-normal fit needs at least 10 groups");
    if (!(sigma0sq > 0.0)) throw std::invalid_argument("truncated-normal fit needs sigma0^2 > 0");
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j < summary.size(); ++j) {
        const double k = static_cast<double>(summary.k[j]);
        if (k < 1) throw std::invalid_argument("truncated-normal fit: group with no residual degrees of freedom");
        const double t = summary.e[j] / (k * sigma0sq);
        m1 += t;
        m2 += t * t / (1.0 + 2.0 / k);
    }
    m1 /= static_cast<double>(summary.size());
    m2 /= static_cast<double>(summary.size());
    if (!(m2 > 0.0)) throw std::domain_error("truncated-normal fit: residuals are all zero");

    TnFit fit;
    const double root_m2 = std::sqrt(m2);
    if (m1 <= folded_normal_mean(0.0, m2)) {
        fit.mu_z = 0.0;
        fit.tau2 = m2;
        fit.boundary = true;
        fit.residual = folded_normal_mean(0.0, m2) - m1;
        return fit;
    }
    if (m1 >= root_m2) {
        fit.mu_z = root_m2;
        fit.tau2 = 0.0;
        fit.boundary = true;
        fit.residual = root_m2 - m1;
        return fit;
    }
    auto g = [&](double mu) { return folded_normal_mean(mu, std::max(0.0, m2 - mu * mu)) - m1; };
    std::uintmax_t iters = 200;
    const auto bracket =
        boost::math::tools::toms748_solve(g, 0.0, root_m2, boost::math::tools::eps_tolerance<double>(50), iters);
    if (iters >= 200) throw std::domain_error("truncated-normal fit did not converge; try a grid search");
    fit.mu_z = 0.5 * (bracket.first + bracket.second);
    fit.tau2 = std::max(0.0, m2 - fit.mu_z * fit.mu_z);
    fit.residual = g(fit.mu_z);
    if (std::abs(fit.residual) > 1e-8 * std::max(1.0, m1))
        throw std::domain_error("truncated-normal fit did not converge; try a grid search");
    return fit;
}

}  // namespace fab
