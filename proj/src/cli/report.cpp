#include "fab/cli/report.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

namespace fab::cli {

namespace {

Json number(double x) {
    if (!std::isfinite(x)) return nullptr;
    return x;
}

Json vector_json(const VectorRef& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
    return a;
}

Json matrix_json(const MatrixRef& m) {
    Json a = Json::array();
    for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
    return a;
}

Json config_json(const RunConfig& cfg) {
    Json c = Json::object();
    for (const auto& [k, v] : config_echo(cfg)) c[k] = v;
    return c;
}

Json data_json(const Dataset& d) {
    Json j;
    j["rows"] = d.rows;
    j["groups"] = d.groups.size();
    j["focal_columns"] = d.focal_columns;
    j["nuisance_columns"] = d.nuisance_columns;
    Index lo = 0, hi = 0;
    for (std::size_t i = 0; i < d.groups.size(); ++i) {
        const Index n = d.groups[i].n();
        lo = i ? std::min(lo, n) : n;
        hi = i ? std::max(hi, n) : n;
    }
    j["group_size_min"] = lo;
    j["group_size_max"] = hi;
    j["group_size_mean"] = d.groups.empty() ? 0.0 : static_cast<double>(d.rows) / static_cast<double>(d.groups.size());
    return j;
}

Json variance_fit_json(const std::optional<std::variant<IgFit, TnFit>>& vf) {
    if (!vf) return nullptr;
    Json j;
    if (const auto* ig = std::get_if<IgFit>(&*vf)) {
        j["model"] = "inverse_gamma";
        j["alpha"] = number(ig->alpha);
        j["beta"] = number(ig->beta);
    } else {
        const auto& tn = std::get<TnFit>(*vf);
        j["model"] = "truncated_normal";
        j["mu_z"] = number(tn.mu_z);
        j["tau2"] = number(tn.tau2);
        j["boundary"] = tn.boundary;
    }
    return j;
}

Json linking_json(const TestConfig& cfg, const RunResult& run) {
    Json j;
    j["mode"] = to_string(cfg.mode);
    if (run.shared_fit) {
        const LinkingFit& f = *run.shared_fit;
        j["beta0"] = vector_json(f.beta0_hat);
        j["Psi"] = matrix_json(f.Psi_hat);
        j["sigma2"] = number(f.sigma2_hat);
        j["variance_fit"] = variance_fit_json(f.variance_fit);
        j["iterations"] = f.iterations;
        j["converged"] = f.converged;
        j["sigma2_degenerate"] = f.sigma2_degenerate;
        j["groups_used"] = f.groups_used.size();
        j["psi_excluded"] = f.psi_excluded;
        return j;
    }
    int it_min = 0, it_max = 0;
    Index fits = 0, unconverged = 0;
    for (const auto& t : run.tests) {
        if (!t.prior) continue;
        const int it = t.prior->linking_iterations;
        it_min = fits ? std::min(it_min, it) : it;
        it_max = fits ? std::max(it_max, it) : it;
        if (!t.prior->linking_converged) ++unconverged;
        ++fits;
    }
    j["fits"] = fits;
    j["iterations_min"] = it_min;
    j["iterations_max"] = it_max;
    j["unconverged"] = unconverged;
    return j;
}

Json summary_json(const std::vector<GroupTest>& tests) {
    Index tested = 0, errors = 0, powerless = 0, rejected = 0, fallback = 0, saturated = 0;
    for (const auto& t : tests) {
        const TestResult& r = t.result;
        if (!r.ok()) {
            ++errors;
            continue;
        }
        if (r.flags.powerless) {
            ++powerless;
            continue;
        }
        ++tested;
        if (r.decision) ++rejected;
        if (r.flags.fallback) ++fallback;
        if (r.flags.saturated) ++saturated;
    }
    Json j;
    j["groups"] = tests.size();
    j["tested"] = tested;
    j["powerless"] = powerless;
    j["errors"] = errors;
    j["fallback"] = fallback;
    j["saturated"] = saturated;
    j["rejected"] = rejected;
    j["proportion_rejected"] = tested ? number(static_cast<double>(rejected) / static_cast<double>(tested)) : Json(nullptr);
    return j;
}

int exit_code_of(const std::vector<GroupTest>& tests) {
    for (const auto& t : tests)
        if (!t.result.ok()) return exit_partial;
    return exit_ok;
}

std::vector<GroupData> dataset_groups(const RunConfig& cfg, Dataset& storage) {
    if (cfg.data_path.empty()) throw std::invalid_argument("no data file configured (data.path)");
    storage = ingest_csv(cfg.data_path, IngestOptions{cfg.group_column, cfg.response_column, cfg.nuisance});
    return storage.groups;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::string dump_report(const Json& report) { return report.dump(2) + "\n"; }

Json result_json(const GroupTest& t) {
    const TestResult& r = t.result;
    Json j;
    j["group"] = r.group_id;
    j["statistic_kind"] = r.statistic_kind;
    j["statistic"] = number(r.statistic);
    j["p_value"] = number(r.p_value);
    j["mc_se"] = number(r.mc_se);
    j["critical_value"] = number(r.critical_value);
    j["alpha"] = r.alpha;
    j["decision"] = r.decision;
    j["S_pvalue"] = r.S_pvalue;
    j["S_quantile"] = r.S_quantile;
    j["n_prime"] = r.n_prime;
    j["seed"] = r.seed;
    j["flags"] = {{"powerless", r.flags.powerless},
                  {"saturated", r.flags.saturated},
                  {"hypotheses_equivalent", r.flags.hypotheses_equivalent},
                  {"fallback", r.flags.fallback},
                  {"low_draw_count", r.flags.low_draw_count}};
    j["error"] = r.ok() ? Json(nullptr) : Json(r.error);
    if (t.prior) {
        const PriorUsed& p = *t.prior;
        Json pj;
        pj["beta0"] = vector_json(p.beta0);
        pj["Psi"] = matrix_json(p.Psi);
        pj["sigma0sq"] = number(p.sigma0sq);
        pj["variance"] = p.variance;
        Json params = Json::array();
        for (double v : p.variance_params) params.push_back(number(v));
        pj["variance_params"] = params;
        pj["linking_iterations"] = p.linking_iterations;
        pj["linking_converged"] = p.linking_converged;
        pj["linking_groups"] = p.linking_groups;
        j["prior"] = pj;
    } else {
        j["prior"] = nullptr;
    }
    return j;
}

std::string results_csv(const std::vector<GroupTest>& tests) {
    std::string out = "group,statistic,p_value,decision\n";
    for (const auto& t : tests) {
        const TestResult& r = t.result;
        std::string id = r.group_id;
        if (id.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : id) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            id = q + "\"";
        }
        auto cell = [](double x) { return std::isfinite(x) ? format_double(x) : std::string(); };
        out += id + "," + cell(r.statistic) + "," + cell(r.p_value) + "," +
               (r.decision ? "1" : "0") + "\n";
    }
    return out;
}

Json bh_json(const std::vector<GroupTest>& tests, const std::vector<double>& alphas) {
    std::vector<double> p;
    p.reserve(tests.size());
    Index m = 0;
    for (const auto& t : tests) {
        const double v = t.result.ok() ? t.result.p_value : std::numeric_limits<double>::quiet_NaN();
        p.push_back(v);
        if (!std::isnan(v)) ++m;
    }
    Json out = Json::array();
    for (double a : alphas) {
        const auto idx = bh_fdr(p, a);
        Json j;
        j["alpha"] = a;
        j["tested"] = m;
        j["rejected"] = idx.size();
        j["proportion_rejected"] = m ? number(static_cast<double>(idx.size()) / static_cast<double>(m)) : Json(nullptr);
        Json ids = Json::array();
        for (auto i : idx) ids.push_back(tests[i].result.group_id);
        j["groups"] = ids;
        out.push_back(j);
    }
    return out;
}

RunOutput run_test_on(const RunConfig& cfg, const Dataset& data) {
    const auto t0 = Clock::now();
    const RunResult run = run_all_groups(data.groups, cfg.test);
    RunOutput out;
    Json& r = out.report;
    r["version"] = kReportVersion;
    r["command"] = "test";
    r["config"] = config_json(cfg);
    r["data"] = data_json(data);
    r["linking"] = linking_json(cfg.test, run);
    Json results = Json::array();
    for (const auto& t : run.tests) results.push_back(result_json(t));
    r["results"] = results;
    if (!cfg.bh_alphas.empty()) r["bh"] = bh_json(run.tests, cfg.bh_alphas);
    r["summary"] = summary_json(run.tests);
    if (cfg.timing) r["timing"] = {{"wall_seconds", seconds_since(t0)}};
    out.csv = results_csv(run.tests);
    out.exit_code = exit_code_of(run.tests);
    return out;
}

RunOutput run_test(const RunConfig& cfg) {
    Dataset data;
    dataset_groups(cfg, data);
    return run_test_on(cfg, data);
}

RunOutput run_hypothesis_on(const RunConfig& cfg, const Dataset& data) {
    if (!cfg.hypothesis) throw std::invalid_argument("no hypothesis configured (hypothesis.groups, hypothesis.A, hypothesis.v)");
    const HypothesisSpec& hs = *cfg.hypothesis;
    std::map<std::string, Index> index;
    for (std::size_t j = 0; j < data.groups.size(); ++j) index.emplace(data.groups[j].id, static_cast<Index>(j));
    LinearHypothesis h;
    h.A = hs.A;
    h.v = hs.v;
    for (const auto& g : hs.groups) {
        const auto it = index.find(g);
        if (it == index.end()) throw std::invalid_argument("hypothesis names unknown group '" + g + "'");
        h.group_indices.push_back(it->second);
    }
    const auto t0 = Clock::now();
    const GroupTest t = fab_test_linear(data.groups, h, cfg.test);
    RunOutput out;
    Json& r = out.report;
    r["version"] = kReportVersion;
    r["command"] = "hypothesis";
    r["config"] = config_json(cfg);
    r["data"] = data_json(data);
    r["results"] = Json::array({result_json(t)});
    r["summary"] = summary_json({t});
    if (cfg.timing) r["timing"] = {{"wall_seconds", seconds_since(t0)}};
    out.csv = results_csv({t});
    out.exit_code = exit_code_of({t});
    return out;
}

RunOutput run_hypothesis(const RunConfig& cfg) {
    Dataset data;
    dataset_groups(cfg, data);
    return run_hypothesis_on(cfg, data);
}

RunOutput run_power(const PowerSuite& suite) {
    if (suite.scenarios.empty()) throw std::invalid_argument("power suite has no scenarios");
    if (suite.tests.empty()) throw std::invalid_argument("power suite has no tests");
    RunOutput out;
    Json& r = out.report;
    r["version"] = kReportVersion;
    r["command"] = "power";
    r["seed"] = suite.seed;
    Json records = Json::array();
    out.csv = "scenario,n,p,c,theta,alpha,test,power,se,ci_low,ci_high,rejections,replicates\n";
    for (std::size_t s = 0; s < suite.scenarios.size(); ++s) {
        const PowerScenario& scn = suite.scenarios[s];
        scn.validate();
        for (PowerTest test : suite.tests) {
            const PowerEstimate est = power_simulation(scn, test, suite.seed, suite.threads);
            Json j;
            j["scenario"] = s;
            j["n"] = scn.n;
            j["p"] = scn.p();
            j["c"] = number(scn.c());
            j["p_rule"] = to_string(scn.p_rule);
            j["c_rule"] = to_string(scn.c_rule);
            j["angle_rule"] = to_string(scn.angle_rule);
            j["theta"] = number(scn.theta());
            j["sigma2"] = scn.sigma2;
            j["alpha"] = scn.alpha;
            j["test"] = to_string(test);
            j["power"] = number(est.power);
            j["se"] = number(est.se);
            j["ci_low"] = number(est.ci_low);
            j["ci_high"] = number(est.ci_high);
            j["rejections"] = est.rejections;
            j["replicates"] = est.replicates;
            records.push_back(j);
            out.csv += std::to_string(s) + "," + std::to_string(scn.n) + "," + std::to_string(scn.p()) + "," +
                       format_double(scn.c()) + "," + format_double(scn.theta()) + "," + format_double(scn.alpha) +
                       "," + to_string(test) + "," + format_double(est.power) + "," + format_double(est.se) + "," +
                       format_double(est.ci_low) + "," + format_double(est.ci_high) + "," +
                       std::to_string(est.rejections) + "," + std::to_string(est.replicates) + "\n";
        }
    }
    r["records"] = records;
    return out;
}

RunOutput run_ratio(const RatioRequest& req) {
    if (req.n.empty() || req.p.empty() || req.c.empty()) throw std::invalid_argument("ratio needs n, p and c");
    if (req.S != 0 && req.S < 100) throw std::invalid_argument("ratio Monte Carlo needs S >= 100");
    RunOutput out;
    Json& r = out.report;
    r["version"] = kReportVersion;
    r["command"] = "ratio";
    if (req.S > 0) {
        r["S"] = req.S;
        r["seed"] = req.seed;
    }
    Json records = Json::array();
    out.csv = "n,p,c,ratio,lower_bound";
    out.csv += req.S > 0 ? ",mc_ratio,mc_se\n" : "\n";
    for (Index n : req.n) {
        std::optional<NullEnsemble> ens;
        if (req.S > 0) ens = sample_null_sphere(n, req.S, req.seed, req.threads);
        for (Index p : req.p) {
            if (p < 1 || p >= n) continue;
            for (double c : req.c) {
                const RatioExact ex = pvalue_ratio_exact(n, p, c);
                Json j;
                j["n"] = n;
                j["p"] = p;
                j["c"] = c;
                j["ratio"] = number(ex.ratio);
                j["lower_bound"] = number(ex.lower_bound);
                j["bound_holds"] = ex.ratio >= ex.lower_bound;
                out.csv += std::to_string(n) + "," + std::to_string(p) + "," + format_double(c) + "," +
                           format_double(ex.ratio) + "," + format_double(ex.lower_bound);
                if (ens) {
                    const Matrix X = Matrix::Identity(n, p);
                    const Vector mu = Vector::Unit(n, 0);
                    const Vector y = std::sqrt(c) * mu + std::sqrt(1.0 - c) * Vector::Unit(n, n - 1);
                    const RatioMc mc = pvalue_ratio_mc(y, X, mu, *ens);
                    j["mc_ratio"] = number(mc.ratio);
                    j["mc_se"] = number(mc.se_ratio);
                    j["mc_p_f"] = mc.p_f;
                    j["mc_p_cone"] = mc.p_cone;
                    out.csv += "," + format_double(mc.ratio) + "," + format_double(mc.se_ratio);
                }
                out.csv += "\n";
                records.push_back(j);
            }
        }
    }
    if (records.empty()) throw std::invalid_argument("ratio: no (n, p) pair with 1 <= p < n");
    r["records"] = records;
    return out;
}

DimensionRule parse_dimension_rule(const std::string& s) {
    if (s == "fixed") return DimensionRule::fixed;
    if (s == "ratio") return DimensionRule::ratio;
    throw std::invalid_argument("unknown dimension rule '" + s + "' (fixed, ratio)");
}

SignalRule parse_signal_rule(const std::string& s) {
    if (s == "fixed") return SignalRule::fixed;
    if (s == "fourth_root") return SignalRule::fourth_root;
    throw std::invalid_argument("unknown signal rule '" + s + "' (fixed, fourth_root)");
}

AngleRule parse_angle_rule(const std::string& s) {
    if (s == "exact") return AngleRule::exact;
    if (s == "fixed") return AngleRule::fixed;
    if (s == "quarter_minus") return AngleRule::quarter_minus;
    if (s == "power_rate") return AngleRule::power_rate;
    throw std::invalid_argument("unknown angle rule '" + s + "' (exact, fixed, quarter_minus, power_rate)");
}

std::string to_string(DimensionRule r) { return r == DimensionRule::fixed ? "fixed" : "ratio"; }
std::string to_string(SignalRule r) { return r == SignalRule::fixed ? "fixed" : "fourth_root"; }
std::string to_string(AngleRule r) {
    switch (r) {
        case AngleRule::exact: return "exact";
        case AngleRule::fixed: return "fixed";
        case AngleRule::quarter_minus: return "quarter_minus";
        case AngleRule::power_rate: return "power_rate";
    }
    return "exact";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << text;
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void write_outputs(const RunConfig& cfg, const RunOutput& out) {
    const std::string text = dump_report(out.report);
    if (cfg.report_path.empty() || cfg.report_path == "-") {
        std::cout << text;
        std::cout.flush();
    } else {
        write_text_file(cfg.report_path, text);
    }
    if (!cfg.csv_path.empty()) write_text_file(cfg.csv_path, out.csv);
}

}  // namespace fab::cli
