#include "fab/cli/synth.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fab/cli/config.hpp"
#include "fab/random.hpp"

namespace fab::cli {

namespace {

constexpr Index kMinLarge = 10;
constexpr Index kMinSmall = 7;
constexpr Index kMaxSmall = 9;

std::string fixed6(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    std::string s(buf);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::string whole(double x) { return std::to_string(static_cast<long long>(x)); }

}  // namespace

const std::vector<std::string>& synth_focal_columns() {
    static const std::vector<std::string> c{"eth_black", "eth_hispanic", "eth_asian"};
    return c;
}

const std::vector<std::string>& synth_nuisance_columns() {
    static const std::vector<std::string> c{"intercept", "female", "native_english", "parent_ed", "ses"};
    return c;
}

std::string synth_csv(const SynthOptions& opt) {
    if (opt.groups < 1 || opt.small_groups < 0 || opt.small_groups > opt.groups)
        throw std::invalid_argument("synth: need 0 <= small_groups <= groups, groups >= 1");
    if (opt.beta0.size() != 3 || opt.psi_diag.size() != 3 || (opt.psi_diag.array() < 0).any())
        throw std::invalid_argument("synth: beta0 and psi_diag need 3 entries, psi_diag >= 0");
    const Index large = opt.groups - opt.small_groups;
    const double small_mean = 0.5 * (kMinSmall + kMaxSmall);
    double lambda = 0.0;
    if (large > 0) {
        lambda = (opt.mean_size * static_cast<double>(opt.groups) - small_mean * static_cast<double>(opt.small_groups)) /
                     static_cast<double>(large) -
                 static_cast<double>(kMinLarge);
        if (!(lambda > 0.0)) throw std::invalid_argument("synth: mean_size too small for the group layout");
    }

    // Which groups are small is itself random but fixed by the seed.
    std::vector<Index> order(static_cast<std::size_t>(opt.groups));
    for (Index j = 0; j < opt.groups; ++j) order[static_cast<std::size_t>(j)] = j;
    auto layout = block_engine(opt.seed, hash_string("synth-layout"), 0);
    shuffle_indices(layout, order);
    std::vector<bool> small(static_cast<std::size_t>(opt.groups), false);
    for (Index k = 0; k < opt.small_groups; ++k) small[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

    const double base[4] = {0.55, 0.15, 0.17, 0.13};  // white, black, hispanic, asian
    const double concentration = 8.0;  // Dirichlet total mass of school composition
    const double slope_female = 0.05, slope_native = 0.15, slope_parent = 0.10, slope_ses = 0.35;

    std::string out = "group,y";
    for (const auto& c : synth_focal_columns()) out += "," + c;
    for (const auto& c : synth_nuisance_columns()) out += "," + c;
    out += "\n";

    const int width = static_cast<int>(std::to_string(opt.groups).size());
    for (Index j = 0; j < opt.groups; ++j) {
        auto eng = block_engine(opt.seed, hash_string("synth-group"), static_cast<std::uint64_t>(j));
        boost::random::normal_distribution<double> std_normal(0.0, 1.0);

        Index n = 0;
        if (small[static_cast<std::size_t>(j)]) {
            n = boost::random::uniform_int_distribution<Index>(kMinSmall, kMaxSmall)(eng);
        } else {
            n = kMinLarge + static_cast<Index>(boost::random::poisson_distribution<int, double>(lambda)(eng));
        }

        double w[4], total = 0.0;
        for (int k = 0; k < 4; ++k) {
            w[k] = boost::random::gamma_distribution<double>(concentration * base[k])(eng);
            total += w[k];
        }
        for (double& x : w) x /= total;
        boost::random::discrete_distribution<int, double> ethnicity(w, w + 4);

        Vector beta(3);
        for (int k = 0; k < 3; ++k) beta[k] = opt.beta0[k] + std::sqrt(opt.psi_diag[k]) * std_normal(eng);
        const double intercept = 0.1 + 0.3 * std_normal(eng);
        const double ses_mean = 0.5 * std_normal(eng);
        const double sigma2 = opt.sigma0sq * std::abs(opt.tn_mu + opt.tn_sd * std_normal(eng));
        const double sigma = std::sqrt(sigma2);

        char id[32];
        std::snprintf(id, sizeof id, "s%0*lld", width, static_cast<long long>(j + 1));
        for (Index i = 0; i < n; ++i) {
            const int e = ethnicity(eng);
            const double female = boost::random::bernoulli_distribution<double>(0.5)(eng) ? 1.0 : 0.0;
            const double p_native = (e == 2 || e == 3) ? 0.5 : 0.92;
            const double native = boost::random::bernoulli_distribution<double>(p_native)(eng) ? 1.0 : 0.0;
            const double parent = static_cast<double>(boost::random::uniform_int_distribution<int>(1, 6)(eng));
            const double ses = ses_mean + 0.7 * std_normal(eng);
            const double d[3] = {e == 1 ? 1.0 : 0.0, e == 2 ? 1.0 : 0.0, e == 3 ? 1.0 : 0.0};
            const double mean = intercept + slope_female * female + slope_native * native +
                                slope_parent * (parent - 3.5) + slope_ses * ses + beta[0] * d[0] + beta[1] * d[1] +
                                beta[2] * d[2];
            const double y = mean + sigma * std_normal(eng);
            out += std::string(id) + "," + fixed6(y) + "," + whole(d[0]) + "," + whole(d[1]) + "," + whole(d[2]) + ",1," +
                   whole(female) + "," + whole(native) + "," + whole(parent) + "," + fixed6(ses) + "\n";
        }
    }
    return out;
}

std::string synth_config(const std::string& data_path) {
    std::string nuisance;
    for (const auto& c : synth_nuisance_columns()) nuisance += (nuisance.empty() ? "" : ",") + c;
    return "[data]\npath = " + data_path + "\nnuisance = " + nuisance +
           "\n\n[test]\nstatistic = fab\nalpha = 0.05\n\n[linking]\nmode = leave_one_out\n\n[bh]\nalphas = "
           "0.01,0.05,0.1\n";
}

}  // namespace fab::cli
