#include "fab/cli/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fab::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

double parse_double(const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v))
        throw std::invalid_argument("not a finite number: '" + s + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& s) {
    const std::string t = trim(s);
    Int v{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw std::invalid_argument("not an integer: '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw std::invalid_argument("not a boolean: '" + s + "'");
}

std::vector<std::string> parse_names(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    for (auto& x : split(s, ',')) {
        if (x.empty()) throw std::invalid_argument("empty name in list '" + s + "'");
        out.push_back(x);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

HypothesisSpec& hyp(RunConfig& cfg) {
    if (!cfg.hypothesis) cfg.hypothesis = HypothesisSpec{};
    return *cfg.hypothesis;
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    for (const auto& x : split(s, ',')) out.push_back(parse_double(x));
    return out;
}

Matrix parse_matrix(const std::string& s) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(s, ';')) rows.push_back(parse_list(r));
    if (rows.empty() || rows.front().empty()) throw std::invalid_argument("empty matrix '" + s + "'");
    const std::size_t cols = rows.front().size();
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) throw std::invalid_argument("ragged matrix '" + s + "'");
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return m;
}

std::string format_list(const VectorRef& v) {
    std::string out;
    for (Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
    return out;
}

std::string format_matrix(const MatrixRef& m) {
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        if (i) out += ";";
        out += format_list(m.row(i).transpose());
    }
    return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    TestConfig& t = cfg.test;
    PriorOverride& pr = t.prior;
    if (key == "test.alpha") t.alpha = parse_double(value);
    else if (key == "test.seed") t.seed = parse_int<std::uint64_t>(value);
    else if (key == "test.s_pvalue") t.S_pvalue = parse_int<Index>(value);
    else if (key == "test.s_quantile") t.S_quantile = parse_int<Index>(value);
    else if (key == "test.statistic") t.statistic = parse_statistic(value);
    else if (key == "test.null") t.null_kind = parse_null_kind(value);
    else if (key == "test.add_one") t.add_one = parse_bool(value);
    else if (key == "test.mixture_draws") t.mixture_draws = parse_int<int>(value);
    else if (key == "test.f_fallback") t.f_fallback = parse_bool(value);
    else if (key == "linking.mode") t.mode = parse_linking_mode(value);
    else if (key == "linking.max_iter") t.max_iter = parse_int<int>(value);
    else if (key == "linking.tol") t.tol = parse_double(value);
    else if (key == "prior.beta0") {
        const auto v = parse_list(value);
        pr.beta0 = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    } else if (key == "prior.psi") pr.Psi = parse_matrix(value);
    else if (key == "prior.gamma") pr.gamma = parse_double(value);
    else if (key == "prior.sigma0sq") pr.sigma0sq = parse_double(value);
    else if (key == "prior.ig_alpha") {
        if (!pr.ig) pr.ig = InverseGamma{0.0, 0.0};
        pr.ig->alpha = parse_double(value);
    } else if (key == "prior.ig_beta") {
        if (!pr.ig) pr.ig = InverseGamma{0.0, 0.0};
        pr.ig->beta = parse_double(value);
    } else if (key == "prior.tn_mu_z") pr.tn_mu_z = parse_double(value);
    else if (key == "prior.tn_tau2") pr.tn_tau2 = parse_double(value);
    else if (key == "data.path") cfg.data_path = value;
    else if (key == "data.group_column") cfg.group_column = value;
    else if (key == "data.response_column") cfg.response_column = value;
    else if (key == "data.nuisance") cfg.nuisance = parse_names(value);
    else if (key == "output.report") cfg.report_path = value;
    else if (key == "output.csv") cfg.csv_path = value;
    else if (key == "output.timing") cfg.timing = parse_bool(value);
    else if (key == "bh.alphas") cfg.bh_alphas = parse_list(value);
    else if (key == "hypothesis.groups") hyp(cfg).groups = parse_names(value);
    else if (key == "hypothesis.A") hyp(cfg).A = parse_matrix(value);
    else if (key == "hypothesis.v") {
        const auto v = parse_list(value);
        hyp(cfg).v = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    } else if (key == "runtime.threads") t.threads = parse_int<unsigned>(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::invalid_argument("line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        try {
            set_config_value(base, key, line.substr(eq + 1));
        } catch (const std::exception& e) {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const auto report = nlohmann::ordered_json::parse(text);
        if (!report.contains("config")) throw std::invalid_argument("report has no config echo");
        for (const auto& [k, v] : report["config"].items()) set_config_value(base, k, v.get<std::string>());
        return base;
    }
    return parse_config_text(text, base);
}

std::map<std::string, std::string> config_echo(const RunConfig& cfg) {
    const TestConfig& t = cfg.test;
    const PriorOverride& pr = t.prior;
    std::map<std::string, std::string> e;
    e["test.alpha"] = format_double(t.alpha);
    e["test.seed"] = std::to_string(t.seed);
    e["test.s_pvalue"] = std::to_string(t.S_pvalue);
    e["test.s_quantile"] = std::to_string(t.S_quantile);
    e["test.statistic"] = to_string(t.statistic);
    e["test.null"] = to_string(t.null_kind);
    e["test.add_one"] = t.add_one ? "true" : "false";
    e["test.mixture_draws"] = std::to_string(t.mixture_draws);
    e["test.f_fallback"] = t.f_fallback ? "true" : "false";
    e["linking.mode"] = to_string(t.mode);
    e["linking.max_iter"] = std::to_string(t.max_iter);
    e["linking.tol"] = format_double(t.tol);
    if (pr.beta0) e["prior.beta0"] = format_list(*pr.beta0);
    if (pr.Psi) e["prior.psi"] = format_matrix(*pr.Psi);
    if (pr.gamma) e["prior.gamma"] = format_double(*pr.gamma);
    if (pr.sigma0sq) e["prior.sigma0sq"] = format_double(*pr.sigma0sq);
    if (pr.ig) {
        e["prior.ig_alpha"] = format_double(pr.ig->alpha);
        e["prior.ig_beta"] = format_double(pr.ig->beta);
    }
    if (pr.tn_mu_z) e["prior.tn_mu_z"] = format_double(*pr.tn_mu_z);
    if (pr.tn_tau2) e["prior.tn_tau2"] = format_double(*pr.tn_tau2);
    e["data.path"] = cfg.data_path;
    e["data.group_column"] = cfg.group_column;
    e["data.response_column"] = cfg.response_column;
    e["data.nuisance"] = join(cfg.nuisance);
    e["output.timing"] = cfg.timing ? "true" : "false";
    if (!cfg.bh_alphas.empty()) {
        e["bh.alphas"] = format_list(Eigen::Map<const Vector>(cfg.bh_alphas.data(), static_cast<Index>(cfg.bh_alphas.size())));
    }
    if (cfg.hypothesis) {
        e["hypothesis.groups"] = join(cfg.hypothesis->groups);
        e["hypothesis.A"] = format_matrix(cfg.hypothesis->A);
        e["hypothesis.v"] = format_list(cfg.hypothesis->v);
    }
    return e;
}

std::string config_echo_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_echo(cfg)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace fab::cli
