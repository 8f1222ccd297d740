// fabtest: command-line front end.
//
//   fabtest test       per-group tests over a CSV file
//   fabtest hypothesis one linear hypothesis A beta = v across named groups
//   fabtest power      power simulation over a scenario grid
//   fabtest ratio      F / cone p-value ratio calculator
//   fabtest synth      synthetic schools-by-students data
//
// Exit codes: 0 ok, 1 some groups failed, 2 global failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fab/cli/config.hpp"
#include "fab/cli/report.hpp"
#include "fab/cli/synth.hpp"

namespace {

using fab::Index;
using fab::cli::RunConfig;

constexpr const char* kSeedEnv = "FABTEST_SEED";

// ---------------------------------------------------------------------------
// test / hypothesis: flags mirror config keys
// ---------------------------------------------------------------------------

struct KeyFlag {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr KeyFlag kRunFlags[] = {
    {"--data", "data.path", "CSV file with a header row"},
    {"--group-column", "data.group_column", "group column name"},
    {"--response-column", "data.response_column", "response column name"},
    {"--nuisance", "data.nuisance", "comma-separated nuisance columns"},
    {"--statistic", "test.statistic", "fab, afab, igfab, tnfab, f or cone"},
    {"--alpha", "test.alpha", "test level"},
    {"--seed", "test.seed", "random seed"},
    {"--s-pvalue", "test.s_pvalue", "null draws for p-values"},
    {"--s-quantile", "test.s_quantile", "null draws for critical values"},
    {"--null", "test.null", "sphere or permutation"},
    {"--add-one", "test.add_one", "add-one p-value correction (true/false)"},
    {"--mixture-draws", "test.mixture_draws", "variance draws for mixture statistics"},
    {"--f-fallback", "test.f_fallback", "use the F test when the linking fit fails (true/false)"},
    {"--mode", "linking.mode", "leave_one_out or shared"},
    {"--max-iter", "linking.max_iter", "linking iterations"},
    {"--tol", "linking.tol", "linking relative tolerance"},
    {"--beta0", "prior.beta0", "fixed prior mean, comma separated"},
    {"--psi", "prior.psi", "fixed prior covariance, rows separated by ';'"},
    {"--gamma", "prior.gamma", "prior covariance gamma (X'X)^-1"},
    {"--sigma0sq", "prior.sigma0sq", "fixed variance scale"},
    {"--ig-alpha", "prior.ig_alpha", "inverse-gamma shape"},
    {"--ig-beta", "prior.ig_beta", "inverse-gamma scale"},
    {"--tn-mu", "prior.tn_mu_z", "truncated-normal mean of z"},
    {"--tn-tau2", "prior.tn_tau2", "truncated-normal variance of z"},
    {"--bh", "bh.alphas", "Benjamini-Hochberg levels, comma separated"},
    {"--out", "output.report", "JSON report path (stdout when omitted)"},
    {"--csv", "output.csv", "flat CSV path"},
    {"--timing", "output.timing", "add wall-clock timing to the report (true/false)"},
    {"--threads", "runtime.threads", "worker threads (0 = hardware)"},
};

constexpr KeyFlag kHypothesisFlags[] = {
    {"--groups", "hypothesis.groups", "comma-separated group ids"},
    {"--A", "hypothesis.A", "hypothesis matrix, rows separated by ';'"},
    {"--v", "hypothesis.v", "hypothesis right-hand side"},
};

class RunCommand {
public:
    RunCommand(CLI::App& parent, const std::string& name, const std::string& help, bool hypothesis)
        : hypothesis_(hypothesis) {
        app_ = parent.add_subcommand(name, help);
        app_->add_option("--config", config_path_, "key=value config file or a previous JSON report");
        app_->add_option("--set", sets_, "extra key=value setting (repeatable)");
        for (const auto& f : kRunFlags) add(f);
        if (hypothesis)
            for (const auto& f : kHypothesisFlags) add(f);
    }

    CLI::App* app() const { return app_; }

    int run(const RunConfig& base) const {
        RunConfig cfg = config_path_.empty() ? base : fab::cli::load_config(config_path_, base);
        for (std::size_t i = 0; i < keys_.size(); ++i)
            if (*values_[i]) fab::cli::set_config_value(cfg, keys_[i], **values_[i]);
        for (const auto& s : sets_) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
            fab::cli::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        const auto out = hypothesis_ ? fab::cli::run_hypothesis(cfg) : fab::cli::run_test(cfg);
        fab::cli::write_outputs(cfg, out);
        return out.exit_code;
    }

private:
    void add(const KeyFlag& f) {
        auto slot = std::make_shared<std::optional<std::string>>();
        app_->add_option_function<std::string>(
            f.flag, [slot](const std::string& v) { *slot = v; }, std::string(f.help) + " [" + f.key + "]");
        keys_.push_back(f.key);
        values_.push_back(slot);
    }

    CLI::App* app_ = nullptr;
    bool hypothesis_ = false;
    std::string config_path_;
    std::vector<std::string> sets_;
    std::vector<std::string> keys_;
    std::vector<std::shared_ptr<std::optional<std::string>>> values_;
};

// ---------------------------------------------------------------------------
// power
// ---------------------------------------------------------------------------

struct PowerArgs {
    std::vector<Index> n{400};
    std::string p_rule = "fixed";
    std::vector<double> p{2};
    std::string c_rule = "fixed";
    double c0 = 2.0;
    std::string angle_rule = "exact";
    double angle = 0.0;
    double sigma2 = 1.0;
    double alpha = 0.05;
    Index replicates = 2000;
    double fab_gamma = 1.0;
    Index s_quantile = 4000;
    std::vector<std::string> tests{"f", "cone"};
    std::string preset;
    std::string out;
    std::string csv;
    unsigned threads = 1;
};

// n = 400 scenarios of the dimension/signal regimes: F at p = n/2 and fixed
// signal, cone at p in {2, 200}, and the n^{1/4} signal at p = n/2.
std::vector<fab::PowerScenario> regime_preset(const PowerArgs& a) {
    std::vector<fab::PowerScenario> out;
    auto make = [&](double p, fab::SignalRule c_rule) {
        fab::PowerScenario s;
        s.n = 400;
        s.p_rule = fab::DimensionRule::fixed;
        s.p_value = p;
        s.c_rule = c_rule;
        s.c0 = 2.0;
        s.angle_rule = fab::AngleRule::exact;
        s.sigma2 = 1.0;
        s.alpha = a.alpha;
        s.replicates = a.replicates;
        s.fab_gamma = a.fab_gamma;
        s.S_quantile = a.s_quantile;
        return s;
    };
    out.push_back(make(200, fab::SignalRule::fixed));
    out.push_back(make(2, fab::SignalRule::fixed));
    out.push_back(make(200, fab::SignalRule::fourth_root));
    return out;
}

int run_power(const PowerArgs& a, std::uint64_t seed) {
    fab::cli::PowerSuite suite;
    suite.seed = seed;
    suite.threads = a.threads;
    for (const auto& t : a.tests) suite.tests.push_back(fab::parse_power_test(t));
    if (a.preset == "regimes") {
        suite.scenarios = regime_preset(a);
    } else if (!a.preset.empty()) {
        throw std::invalid_argument("unknown preset '" + a.preset + "' (regimes)");
    } else {
        for (Index n : a.n) {
            for (double p : a.p) {
                fab::PowerScenario s;
                s.n = n;
                s.p_rule = fab::cli::parse_dimension_rule(a.p_rule);
                s.p_value = p;
                s.c_rule = fab::cli::parse_signal_rule(a.c_rule);
                s.c0 = a.c0;
                s.angle_rule = fab::cli::parse_angle_rule(a.angle_rule);
                s.angle_param = a.angle;
                s.sigma2 = a.sigma2;
                s.alpha = a.alpha;
                s.replicates = a.replicates;
                s.fab_gamma = a.fab_gamma;
                s.S_quantile = a.s_quantile;
                suite.scenarios.push_back(s);
            }
        }
    }
    const auto out = fab::cli::run_power(suite);
    RunConfig sink;
    sink.report_path = a.out;
    sink.csv_path = a.csv;
    fab::cli::write_outputs(sink, out);
    return out.exit_code;
}

// ---------------------------------------------------------------------------
// ratio / synth
// ---------------------------------------------------------------------------

struct RatioArgs {
    fab::cli::RatioRequest req;
    std::string out;
    std::string csv;
};

struct SynthArgs {
    fab::cli::SynthOptions opt;
    std::string out;
    std::string config_out;
};

int run_synth(const SynthArgs& a) {
    const std::string csv = fab::cli::synth_csv(a.opt);
    if (a.out.empty() || a.out == "-") {
        std::cout << csv;
    } else {
        fab::cli::write_text_file(a.out, csv);
    }
    if (!a.config_out.empty()) fab::cli::write_text_file(a.config_out, fab::cli::synth_config(a.out));
    return fab::cli::exit_ok;
}

std::uint64_t default_seed() {
    const char* env = std::getenv(kSeedEnv);
    if (env == nullptr || *env == '\0') return fab::TestConfig{}.seed;
    RunConfig probe;
    fab::cli::set_config_value(probe, "test.seed", env);
    return probe.test.seed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FAB tests of linear hypotheses in multigroup Gaussian linear models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fab::cli::kReportVersion);

    RunCommand test(app, "test", "test every group against the linking model of the others", false);
    RunCommand hyp(app, "hypothesis", "test one linear hypothesis A beta = v across groups", true);

    PowerArgs pa;
    std::optional<std::uint64_t> power_seed;
    auto* power = app.add_subcommand("power", "power simulation over a scenario grid");
    power->add_option("--n", pa.n, "dimensions")->delimiter(',');
    power->add_option("--p-rule", pa.p_rule, "fixed or ratio");
    power->add_option("--p", pa.p, "p (fixed) or gamma (ratio), comma separated")->delimiter(',');
    power->add_option("--c-rule", pa.c_rule, "fixed or fourth_root");
    power->add_option("--c0", pa.c0, "signal |X beta| for the fixed rule");
    power->add_option("--angle-rule", pa.angle_rule, "exact, fixed, quarter_minus or power_rate");
    power->add_option("--angle", pa.angle, "theta, a or kappa for the angle rule");
    power->add_option("--sigma2", pa.sigma2, "noise variance");
    power->add_option("--alpha", pa.alpha, "test level");
    power->add_option("--replicates", pa.replicates, "replicates per scenario");
    power->add_option("--fab-gamma", pa.fab_gamma, "FAB prior gamma");
    power->add_option("--s-quantile", pa.s_quantile, "null draws for the FAB critical value");
    power->add_option("--tests", pa.tests, "f, cone, fab")->delimiter(',');
    power->add_option("--preset", pa.preset, "named scenario set: regimes");
    power->add_option("--seed", power_seed, "random seed");
    power->add_option("--threads", pa.threads, "worker threads (0 = hardware)");
    power->add_option("--out", pa.out, "JSON report path (stdout when omitted)");
    power->add_option("--csv", pa.csv, "CSV path");

    RatioArgs ra;
    std::optional<std::uint64_t> ratio_seed;
    auto* ratio = app.add_subcommand("ratio", "F / cone p-value ratio and its lower bound");
    ratio->add_option("--n", ra.req.n, "dimensions")->delimiter(',')->required();
    ratio->add_option("--p", ra.req.p, "regression dimensions")->delimiter(',')->required();
    ratio->add_option("--c", ra.req.c, "values in (0, 1)")->delimiter(',')->required();
    ratio->add_option("--mc", ra.req.S, "Monte Carlo draws for a cross-check (0 = none)");
    ratio->add_option("--seed", ratio_seed, "random seed");
    ratio->add_option("--threads", ra.req.threads, "worker threads (0 = hardware)");
    ratio->add_option("--out", ra.out, "JSON report path (stdout when omitted)");
    ratio->add_option("--csv", ra.csv, "CSV path");

    SynthArgs sa;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "synthetic schools-by-students CSV");
    synth->add_option("--groups", sa.opt.groups, "number of groups");
    synth->add_option("--small-groups", sa.opt.small_groups, "groups with 7 to 9 rows");
    synth->add_option("--mean-size", sa.opt.mean_size, "mean rows per group");
    synth->add_option("--seed", synth_seed, "random seed");
    synth->add_option("--out", sa.out, "CSV path (stdout when omitted)");
    synth->add_option("--config-out", sa.config_out, "write a matching config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? fab::cli::exit_ok : fab::cli::exit_failure;
    }

    try {
        const std::uint64_t seed = default_seed();
        RunConfig base;
        base.test.seed = seed;
        if (*test.app()) return test.run(base);
        if (*hyp.app()) return hyp.run(base);
        if (*power) return run_power(pa, power_seed.value_or(seed));
        if (*ratio) {
            ra.req.seed = ratio_seed.value_or(seed);
            const auto out = fab::cli::run_ratio(ra.req);
            RunConfig sink;
            sink.report_path = ra.out;
            sink.csv_path = ra.csv;
            fab::cli::write_outputs(sink, out);
            return out.exit_code;
        }
        if (*synth) {
            sa.opt.seed = synth_seed.value_or(seed);
            return run_synth(sa);
        }
    } catch (const std::exception& e) {
        std::cerr << "fabtest: error: " << e.what() << "\n";
        return fab::cli::exit_failure;
    }
    return fab::cli::exit_failure;
}
