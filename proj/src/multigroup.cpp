#include "fab/multigroup.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "fab/parallel.hpp"
#include "fab/random.hpp"

namespace fab {

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

std::string to_string(StatisticKind k) {
    switch (k) {
        case StatisticKind::fab: return "fab";
        case StatisticKind::afab: return "afab";
        case StatisticKind::igfab: return "igfab";
        case StatisticKind::tnfab: return "tnfab";
        case StatisticKind::f: return "f";
        case StatisticKind::cone: return "cone";
    }
    return "?";
}

std::string to_string(LinkingMode m) { return m == LinkingMode::shared ? "shared" : "leave_one_out"; }
std::string to_string(NullKind k) { return k == NullKind::permutation ? "permutation" : "sphere"; }

StatisticKind parse_statistic(const std::string& s) {
    for (auto k : {StatisticKind::fab, StatisticKind::afab, StatisticKind::igfab, StatisticKind::tnfab,
                   StatisticKind::f, StatisticKind::cone})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown statistic '" + s + "'");
}

LinkingMode parse_linking_mode(const std::string& s) {
    if (s == "leave_one_out") return LinkingMode::leave_one_out;
    if (s == "shared") return LinkingMode::shared;
    throw std::invalid_argument("unknown linking mode '" + s + "'");
}

NullKind parse_null_kind(const std::string& s) {
    if (s == "sphere") return NullKind::sphere;
    if (s == "permutation") return NullKind::permutation;
    throw std::invalid_argument("unknown null kind '" + s + "'");
}

void validate(const TestConfig& c) {
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (c.S_pvalue < 100 || c.S_quantile < 100) throw std::invalid_argument("draw counts must be >= 100");
    if (c.mixture_draws < 1) throw std::invalid_argument("mixture draws must be >= 1");
    if (c.max_iter < 1 || !(c.tol > 0.0)) throw std::invalid_argument("invalid linking iteration settings");
    if (c.prior.Psi && c.prior.gamma) throw std::invalid_argument("set either prior Psi or prior gamma, not both");
    if (c.prior.gamma && !(*c.prior.gamma >= 0.0)) throw std::invalid_argument("prior gamma must be >= 0");
    if (c.prior.sigma0sq && !(*c.prior.sigma0sq > 0.0)) throw std::invalid_argument("prior sigma0sq must be > 0");
    if (c.prior.tn_mu_z.has_value() != c.prior.tn_tau2.has_value())
        throw std::invalid_argument("set both truncated-normal parameters or neither");
    if (c.statistic == StatisticKind::cone && c.prior.beta0 && c.prior.beta0->isZero(0.0))
        throw std::invalid_argument("cone statistic needs a non-zero direction");
}

// ---------------------------------------------------------------------------
// Ensemble cache
// ---------------------------------------------------------------------------

struct EnsembleCache::Impl {
    std::uint64_t seed;
    Index S;
    unsigned threads;
    std::mutex mutex;
    std::map<Index, std::unique_ptr<NullEnsemble>> sphere;
};

EnsembleCache::EnsembleCache(std::uint64_t seed, Index S, unsigned threads) : impl_(std::make_shared<Impl>()) {
    impl_->seed = seed;
    impl_->S = S;
    impl_->threads = threads;
}

const NullEnsemble& EnsembleCache::sphere(Index n) {
    std::lock_guard lock(impl_->mutex);
    auto& slot = impl_->sphere[n];
    if (!slot) slot = std::make_unique<NullEnsemble>(sample_null_sphere(n, impl_->S, impl_->seed, impl_->threads));
    return *slot;
}

// ---------------------------------------------------------------------------
// Single test on a reduced problem
// ---------------------------------------------------------------------------

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BuiltStatistic {
    std::unique_ptr<Statistic> stat;
    std::optional<PriorUsed> prior;
};

Matrix gamma_psi(const ReducedProblem& rp, double gamma) {
    if (rp.blocks != 1) throw std::invalid_argument("prior gamma applies to single-group tests only");
    const Matrix G = rp.design.transpose() * rp.design;
    Eigen::LDLT<Matrix> ldlt(G);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * G.trace())
        throw std::domain_error("prior gamma needs a full-rank reduced design");
    return gamma * ldlt.solve(Matrix::Identity(G.rows(), G.cols()));
}

BuiltStatistic build_prior_statistic(const ReducedProblem& rp, const std::string& id,
                                     const std::vector<GroupSummary>& held_out,
                                     const std::optional<LinkingFit>& shared_fit, const TestConfig& cfg,
                                     StatisticKind kind) {
    const PriorOverride& ov = cfg.prior;
    std::optional<LinkingFit> fit = shared_fit;
    const bool need_fit = !ov.fixes_coefficients();
    if (need_fit && !fit) {
        LinkingOptions opt;
        opt.max_iter = cfg.max_iter;
        opt.tol = cfg.tol;
        opt.sigma2 = ov.sigma0sq;
        fit = fit_linking_iterative(held_out, opt);
    }

    PriorUsed used;
    if (ov.sigma0sq) {
        used.sigma0sq = *ov.sigma0sq;
    } else if (fit) {
        used.sigma0sq = fit->sigma2_hat;
    } else {
        used.sigma0sq = estimate_sigma2_reml(held_out);
    }
    if (!(used.sigma0sq > 0.0)) throw std::domain_error("held-out residual variance is zero");
    if (fit) {
        used.linking_iterations = fit->iterations;
        used.linking_converged = fit->converged;
        used.linking_groups = static_cast<Index>(fit->groups_used.size());
    }
    used.beta0 = ov.beta0 ? *ov.beta0 : fit->beta0_hat;
    if (ov.gamma) {
        used.Psi = gamma_psi(rp, *ov.gamma);
    } else {
        used.Psi = ov.Psi ? *ov.Psi : fit->Psi_hat;
    }
    PriorSpec spec{used.beta0, used.Psi, PointMass{used.sigma0sq}, ov.gamma};

    const std::uint64_t subseed = mix_keys(cfg.seed, hash_string(id));
    BuiltStatistic out;
    switch (kind) {
        case StatisticKind::igfab: {
            IgFit ig;
            if (ov.ig) {
                ig = {ov.ig->alpha, ov.ig->beta};
            } else if (fit && fit->variance_fit && std::holds_alternative<IgFit>(*fit->variance_fit)) {
                ig = std::get<IgFit>(*fit->variance_fit);
            } else {
                ig = fit_ig_moments(residual_summary(held_out));
            }
            spec.variance = InverseGamma{ig.alpha, ig.beta};
            used.variance = "inverse_gamma";
            used.variance_params = {ig.alpha, ig.beta};
            break;
        }
        case StatisticKind::tnfab: {
            TnFit tn;
            if (ov.tn_mu_z) {
                tn.mu_z = *ov.tn_mu_z;
                tn.tau2 = *ov.tn_tau2;
            } else if (fit && !ov.sigma0sq && fit->variance_fit && std::holds_alternative<TnFit>(*fit->variance_fit)) {
                tn = std::get<TnFit>(*fit->variance_fit);
            } else {
                tn = fit_tn_variance(residual_summary(held_out), used.sigma0sq);
            }
            if (tn.tau2 > 0.0) {
                spec.variance = ScaledHalfNormal{used.sigma0sq, tn.mu_z, tn.tau2};
            } else {
                spec.variance = PointMass{used.sigma0sq * std::abs(tn.mu_z)};
            }
            used.variance = "truncated_normal";
            used.variance_params = {tn.mu_z, tn.tau2};
            break;
        }
        default:
            used.variance = "point_mass";
    }
    spec = validate(spec);
    used.Psi = spec.Psi;
    const PriorImage img = rp.prior_map(spec.beta0, spec.Psi);

    switch (kind) {
        case StatisticKind::fab: out.stat = std::make_unique<FabStatistic>(img, used.sigma0sq); break;
        case StatisticKind::afab: out.stat = std::make_unique<AfabStatistic>(img, used.sigma0sq); break;
        case StatisticKind::cone: {
            const double norm = img.mean.norm();
            if (!(norm > 0.0)) throw std::domain_error("cone statistic needs a non-zero prior mean direction");
            out.stat = std::make_unique<ConeStatistic>(img.mean / norm);
            break;
        }
        case StatisticKind::igfab:
        case StatisticKind::tnfab:
            if (std::holds_alternative<PointMass>(spec.variance)) {
                out.stat = std::make_unique<FabStatistic>(img, std::get<PointMass>(spec.variance).sigma2);
            } else {
                out.stat = std::make_unique<VarianceMixtureFab>(
                    img, variance_draws(spec.variance, cfg.mixture_draws, subseed));
            }
            break;
        case StatisticKind::f: break;
    }
    out.prior = std::move(used);
    return out;
}

GroupTest run_reduced(const ReducedProblem& rp, const std::string& id, const std::vector<GroupSummary>& held_out,
                      const std::optional<LinkingFit>& shared_fit, const TestConfig& cfg, EnsembleCache& cache,
                      unsigned inner_threads) {
    GroupTest out;
    out.mode = cfg.mode;
    TestResult& res = out.result;
    res.group_id = id;
    res.statistic_kind = to_string(cfg.statistic);
    res.alpha = cfg.alpha;
    res.seed = cfg.seed;
    res.n_prime = rp.n_prime();
    res.flags.hypotheses_equivalent = rp.hypotheses_equivalent;
    res.S_pvalue = cfg.S_pvalue;
    res.S_quantile = cfg.S_quantile;

    if (rp.powerless) {
        res.flags.powerless = true;
        res.statistic = kNaN;
        res.p_value = kNaN;
        res.mc_se = kNaN;
        res.critical_value = kNaN;
        res.decision = false;
        return out;
    }

    StatisticKind kind = cfg.statistic;
    std::unique_ptr<Statistic> stat;
    if (cfg.force_fallback && kind != StatisticKind::f) {
        kind = StatisticKind::f;
        res.flags.fallback = true;
    }
    if (kind != StatisticKind::f) {
        try {
            auto built = build_prior_statistic(rp, id, held_out, shared_fit, cfg, kind);
            stat = std::move(built.stat);
            out.prior = std::move(built.prior);
        } catch (const std::exception&) {
            if (!cfg.f_fallback) throw;
            kind = StatisticKind::f;
            res.flags.fallback = true;
        }
    }
    if (kind == StatisticKind::f) stat = std::make_unique<FStatistic>(qr_projection(rp.design));

    const Index S = std::max(cfg.S_pvalue, cfg.S_quantile);
    Vector null_stats;
    if (cfg.null_kind == NullKind::permutation) {
        const NullEnsemble ens = permutation_null(rp.z, S, cfg.seed, inner_threads);
        null_stats = evaluate_null(*stat, ens, S, inner_threads);
    } else {
        null_stats = evaluate_null(*stat, cache.sphere(rp.n_prime()), S, inner_threads);
    }
    res.statistic = (*stat)(rp.u);
    if (std::isnan(res.statistic)) throw std::domain_error("observed statistic is NaN");
    res.flags.saturated = std::isinf(res.statistic);
    const PValue pv = pvalue_from_null(null_stats, res.statistic, cfg.add_one, cfg.S_pvalue);
    const Quantile q = quantile_from_null(null_stats, cfg.alpha, cfg.S_quantile);
    res.p_value = pv.p_value;
    res.mc_se = pv.mc_se;
    res.critical_value = q.value;
    res.flags.low_draw_count = q.low_count;
    res.decision = res.statistic > res.critical_value;
    return out;
}

struct Prepared {
    std::vector<std::optional<GroupSummary>> summaries;
    std::vector<std::string> summary_errors;
};

Prepared prepare_summaries(const std::vector<GroupData>& groups) {
    Prepared p;
    p.summaries.resize(groups.size());
    p.summary_errors.resize(groups.size());
    for (std::size_t j = 0; j < groups.size(); ++j) {
        try {
            p.summaries[j] = summarize(reduce_nuisance(groups[j]));
        } catch (const std::exception& e) {
            p.summary_errors[j] = e.what();
        }
    }
    return p;
}

std::vector<GroupSummary> held_out_except(const Prepared& p, const std::vector<bool>& excluded) {
    std::vector<GroupSummary> out;
    out.reserve(p.summaries.size());
    for (std::size_t j = 0; j < p.summaries.size(); ++j)
        if (!excluded[j] && p.summaries[j]) out.push_back(*p.summaries[j]);
    return out;
}

GroupTest error_result(const std::string& id, const TestConfig& cfg, const std::string& what) {
    GroupTest out;
    out.mode = cfg.mode;
    out.result.group_id = id;
    out.result.statistic_kind = to_string(cfg.statistic);
    out.result.alpha = cfg.alpha;
    out.result.seed = cfg.seed;
    out.result.statistic = kNaN;
    out.result.p_value = kNaN;
    out.result.mc_se = kNaN;
    out.result.critical_value = kNaN;
    out.result.S_pvalue = cfg.S_pvalue;
    out.result.S_quantile = cfg.S_quantile;
    out.result.error = what;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

GroupTest fab_test_group(const std::vector<GroupData>& groups, Index focal, const TestConfig& config) {
    validate(config);
    if (focal < 0 || focal >= static_cast<Index>(groups.size())) throw std::invalid_argument("focal index out of range");
    const GroupData& g = groups[static_cast<std::size_t>(focal)];
    if (g.n() < 2) throw std::invalid_argument("focal group needs at least two observations");
    const ReducedProblem rp = project_out_nuisance(g);
    const Prepared prep = prepare_summaries(groups);
    std::vector<bool> excluded(groups.size(), false);
    excluded[static_cast<std::size_t>(focal)] = true;
    const auto held_out = held_out_except(prep, excluded);
    EnsembleCache cache(config.seed, std::max(config.S_pvalue, config.S_quantile), config.threads);
    return run_reduced(rp, g.id, held_out, std::nullopt, config, cache, config.threads);
}

GroupTest fab_test_linear(const std::vector<GroupData>& groups, const LinearHypothesis& h,
                          const TestConfig& config) {
    validate(config);
    const ReducedProblem rp = reduce_linear_hypothesis(groups, h);
    const Prepared prep = prepare_summaries(groups);
    std::vector<bool> excluded(groups.size(), false);
    std::string id;
    for (Index j : h.group_indices) {
        excluded[static_cast<std::size_t>(j)] = true;
        id += (id.empty() ? "" : "+") + groups[static_cast<std::size_t>(j)].id;
    }
    const auto held_out = held_out_except(prep, excluded);
    EnsembleCache cache(config.seed, std::max(config.S_pvalue, config.S_quantile), config.threads);
    return run_reduced(rp, id, held_out, std::nullopt, config, cache, config.threads);
}

RunResult run_all_groups(const std::vector<GroupData>& groups, const TestConfig& config) {
    validate(config);
    if (groups.size() < 2) throw std::invalid_argument("run_all_groups needs at least two groups");
    const Prepared prep = prepare_summaries(groups);
    RunResult run;
    run.tests.resize(groups.size());

    std::vector<GroupSummary> all;
    if (config.mode == LinkingMode::shared) {
        all = held_out_except(prep, std::vector<bool>(groups.size(), false));
        if (config.statistic != StatisticKind::f && !config.prior.fixes_coefficients()) {
            LinkingOptions opt;
            opt.max_iter = config.max_iter;
            opt.tol = config.tol;
            opt.sigma2 = config.prior.sigma0sq;
            try {
                run.shared_fit = fit_linking_iterative(all, opt);
            } catch (const std::exception&) {
                if (!config.f_fallback) throw;
            }
            // Variance linking fit, computed once; a failure here resurfaces per group.
            try {
                if (run.shared_fit && config.statistic == StatisticKind::igfab && !config.prior.ig) {
                    run.shared_fit->variance_fit = fit_ig_moments(residual_summary(all));
                } else if (run.shared_fit && config.statistic == StatisticKind::tnfab && !config.prior.tn_mu_z &&
                           !config.prior.sigma0sq) {
                    run.shared_fit->variance_fit = fit_tn_variance(residual_summary(all), run.shared_fit->sigma2_hat);
                }
            } catch (const std::exception&) {
            }
        }
    }

    EnsembleCache cache(config.seed, std::max(config.S_pvalue, config.S_quantile), 1);
    parallel_for(groups.size(), config.threads, [&](std::size_t j) {
        const GroupData& g = groups[j];
        try {
            if (g.n() < 2) throw std::invalid_argument("group needs at least two observations");
            const ReducedProblem rp = project_out_nuisance(g);
            if (config.mode == LinkingMode::shared) {
                if (!run.shared_fit && config.statistic != StatisticKind::f && !config.prior.fixes_coefficients()) {
                    TestConfig forced = config;
                    forced.force_fallback = true;
                    run.tests[j] = run_reduced(rp, g.id, all, std::nullopt, forced, cache, 1);
                } else {
                    run.tests[j] = run_reduced(rp, g.id, all, run.shared_fit, config, cache, 1);
                }
            } else {
                std::vector<bool> excluded(groups.size(), false);
                excluded[j] = true;
                run.tests[j] = run_reduced(rp, g.id, held_out_except(prep, excluded), std::nullopt, config, cache, 1);
            }
        } catch (const std::exception& e) {
            run.tests[j] = error_result(g.id, config, e.what());
        }
    });
    return run;
}

}  // namespace fab
