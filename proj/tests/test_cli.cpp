#include <gtest/gtest.h>

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fab/cli/config.hpp"
#include "fab/cli/ingest.hpp"
#include "fab/cli/report.hpp"
#include "fab/cli/synth.hpp"
#include "support.hpp"

using namespace fab;
using namespace fab::cli;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("fabtest_cli_" + std::to_string(::getpid()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

int run_binary(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(FABTEST_BINARY) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small synthetic data file plus its config.
void write_synth(const TempDir& dir, Index groups = 30) {
    SynthOptions opt;
    opt.groups = groups;
    opt.small_groups = 3;
    opt.mean_size = 14.0;
    opt.seed = 77;
    write_text_file((dir / "data.csv").string(), synth_csv(opt));
    write_text_file((dir / "run.cfg").string(), synth_config((dir / "data.csv").string()));
}

constexpr const char* kTiny =
    "group,y,x1,x2\n"
    "a,1.5,1,0.2\n"
    "b,-0.5,1,0.7\n"
    "a,2.0,1,-0.1\n";

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, SectionsDottedKeysAndComments) {
    const RunConfig c = parse_config_text(
        "# leading comment\n"
        "[test]\n"
        "alpha = 0.1   # trailing comment\n"
        "statistic = afab\n"
        "linking.mode = shared\n"
        "\n"
        "[prior]\n"
        "beta0 = 1, -2\n"
        "psi = 1, 0.5; 0.5, 2\n"
        "[data]\n"
        "nuisance = z1, z2\n");
    EXPECT_DOUBLE_EQ(c.test.alpha, 0.1);
    EXPECT_EQ(c.test.statistic, StatisticKind::afab);
    EXPECT_EQ(c.test.mode, LinkingMode::shared);
    ASSERT_TRUE(c.test.prior.beta0 && c.test.prior.Psi);
    EXPECT_EQ((*c.test.prior.beta0)[1], -2.0);
    EXPECT_EQ((*c.test.prior.Psi)(1, 0), 0.5);
    EXPECT_EQ(c.nuisance, (std::vector<std::string>{"z1", "z2"}));
}

TEST(Config, ErrorsNameTheLine) {
    try {
        parse_config_text("[test]\nalpha = 0.05\nbogus = 3\n");
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config_text("test.alpha = abc\n"), std::invalid_argument);
    EXPECT_THROW(parse_config_text("test.seed = -1\n"), std::invalid_argument);
    EXPECT_THROW(parse_config_text("test.add_one = maybe\n"), std::invalid_argument);
    EXPECT_THROW(parse_config_text("prior.psi = 1,2;3\n"), std::invalid_argument);
    EXPECT_THROW(parse_config_text("just text\n"), std::invalid_argument);
}

TEST(Config, EchoRoundTripsAndOmitsRuntime) {
    RunConfig c = parse_config_text(
        "test.alpha = 0.025\ntest.seed = 99\nprior.gamma = 0.3\nprior.beta0 = 0.1,0.2\n"
        "bh.alphas = 0.01,0.05\nruntime.threads = 8\noutput.report = r.json\n");
    const auto echo = config_echo(c);
    EXPECT_EQ(echo.count("runtime.threads"), 0u);
    EXPECT_EQ(echo.count("output.report"), 0u);
    const RunConfig back = parse_config_text(config_echo_text(c));
    EXPECT_EQ(config_echo(back), echo);
}

TEST(Config, NumberFormattingRoundTrips) {
    auto eng = fab::testing::engine(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = fab::testing::gaussian_vector(eng, 1)[0] * std::pow(10.0, (i % 40) - 20);
        EXPECT_EQ(std::stod(format_double(x)), x);
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(2.0), "2");
    const Matrix m = parse_matrix("1,2;3,4");
    EXPECT_EQ(parse_matrix(format_matrix(m)), m);
    EXPECT_EQ(parse_list("0.5, 1e-3"), (std::vector<double>{0.5, 1e-3}));
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

TEST(Ingest, GroupsInOrderOfFirstAppearance) {
    const Dataset d = ingest_csv_text(kTiny, {});
    ASSERT_EQ(d.groups.size(), 2u);
    EXPECT_EQ(d.groups[0].id, "a");
    EXPECT_EQ(d.groups[0].n(), 2);
    EXPECT_EQ(d.groups[1].n(), 1);
    EXPECT_EQ(d.groups[0].p(), 2);
    EXPECT_EQ(d.rows, 3);
}

TEST(Ingest, NuisanceColumns) {
    IngestOptions opt;
    opt.nuisance = {"x2"};
    const Dataset d = ingest_csv_text(kTiny, opt);
    EXPECT_EQ(d.groups[0].p(), 1);
    ASSERT_TRUE(d.groups[0].Z.has_value());
    EXPECT_EQ(d.groups[0].Z->cols(), 1);
    EXPECT_EQ(d.focal_columns, (std::vector<std::string>{"x1"}));
}

TEST(Ingest, ErrorsNameRowAndColumn) {
    try {
        ingest_csv_text("group,y,x\na,1,2\nb,NaN,3\n", {});
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("row 2"), std::string::npos) << w;
        EXPECT_NE(w.find("'y'"), std::string::npos) << w;
    }
    EXPECT_THROW(ingest_csv_text("group,x\na,1\n", {}), std::invalid_argument);
    EXPECT_THROW(ingest_csv_text("group,y,x\na,1,\n", {}), std::invalid_argument);
    EXPECT_THROW(ingest_csv_text("group,y,x\na,1,abc\n", {}), std::invalid_argument);
    EXPECT_THROW(ingest_csv_text("group,y,x\na,1\n", {}), std::invalid_argument);
    IngestOptions opt;
    opt.nuisance = {"missing"};
    EXPECT_THROW(ingest_csv_text(kTiny, opt), std::invalid_argument);
}

TEST(Ingest, QuotedFields) {
    EXPECT_EQ(split_csv_line("\"a,b\",1,\"say \"\"hi\"\"\""), (std::vector<std::string>{"a,b", "1", "say \"hi\""}));
    const Dataset d = ingest_csv_text("group,y,x\n\"s,1\",1,2\n\"s,1\",3,4\n", {});
    EXPECT_EQ(d.groups[0].id, "s,1");
}

TEST(Ingest, RowOrderWithinGroupsDoesNotMatter) {
    const std::string a = "group,y,x\ng,1,5\ng,2,6\nh,3,7\ng,4,8\nh,5,9\n";
    const std::string b = "group,y,x\nh,5,9\ng,4,8\ng,1,5\nh,3,7\ng,2,6\n";
    const Dataset da = ingest_csv_text(a, {}), db = ingest_csv_text(b, {});
    auto find = [](const Dataset& d, const std::string& id) {
        return *std::find_if(d.groups.begin(), d.groups.end(), [&](const GroupData& g) { return g.id == id; });
    };
    for (const char* id : {"g", "h"}) {
        EXPECT_TRUE(find(da, id).y == find(db, id).y);
        EXPECT_TRUE(find(da, id).X == find(db, id).X);
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST(Report, FStatisticMatchesAnalyticCdf) {
    auto eng = fab::testing::engine(4);
    Dataset d;
    d.groups = fab::testing::linking_groups(eng, 12, 15, (Vector(3) << 0.2, 0.1, 0.0).finished(),
                                            0.05 * Matrix::Identity(3, 3), 1.0);
    for (const auto& g : d.groups) d.rows += g.n();
    RunConfig cfg;
    cfg.test.statistic = StatisticKind::f;
    cfg.test.S_pvalue = 20000;
    const RunOutput out = run_test_on(cfg, d);
    EXPECT_EQ(out.exit_code, exit_ok);
    const boost::math::fisher_f_distribution<double> F(3.0, 12.0);
    for (const auto& r : out.report["results"]) {
        const double stat = r["statistic"].get<double>();
        const double exact = boost::math::cdf(boost::math::complement(F, stat));
        const double se = std::sqrt(exact * (1.0 - exact) / 20000.0);
        EXPECT_NEAR(r["p_value"].get<double>(), exact, 4.0 * se + 1e-12) << r["group"];
    }
}

TEST(Report, BhAndSchema) {
    TempDir dir;
    write_synth(dir);
    RunConfig cfg = load_config((dir / "run.cfg").string());
    cfg.test.S_pvalue = cfg.test.S_quantile = 500;
    cfg.bh_alphas = {0.05, 0.2};
    const RunOutput out = run_test(cfg);
    const Json& r = out.report;
    EXPECT_EQ(r["version"], kReportVersion);
    for (const char* key : {"config", "data", "linking", "results", "bh", "summary"}) EXPECT_TRUE(r.contains(key)) << key;
    EXPECT_FALSE(r.contains("timing"));
    ASSERT_EQ(r["bh"].size(), 2u);
    EXPECT_LE(r["bh"][0]["rejected"].get<int>(), r["bh"][1]["rejected"].get<int>());
    EXPECT_EQ(r["results"].size(), 30u);
    // CSV: header plus one row per group.
    EXPECT_EQ(std::count(out.csv.begin(), out.csv.end(), '\n'), 31);
    EXPECT_EQ(out.csv.substr(0, out.csv.find('\n')), "group,statistic,p_value,decision");
    const std::size_t a = out.csv.find('\n') + 1;
    const std::string row = out.csv.substr(a, out.csv.find('\n', a) - a);
    std::vector<std::string> cells;
    std::stringstream ss(row);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_EQ(cells[0], r["results"][0]["group"].get<std::string>());
    EXPECT_EQ(std::stod(cells[1]), r["results"][0]["statistic"].get<double>());
    EXPECT_EQ(std::stod(cells[2]), r["results"][0]["p_value"].get<double>());
    EXPECT_EQ(cells[3], r["results"][0]["decision"].get<bool>() ? "1" : "0");
}

TEST(Report, PartialFailureExitCode) {
    Dataset d;
    auto eng = fab::testing::engine(5);
    d.groups = fab::testing::linking_groups(eng, 5, 8, (Vector(2) << 1, 1).finished(), Matrix::Identity(2, 2), 1.0);
    d.groups[1].y.setZero();
    RunConfig cfg;
    cfg.test.S_pvalue = cfg.test.S_quantile = 200;
    const RunOutput out = run_test_on(cfg, d);
    EXPECT_EQ(out.exit_code, exit_partial);
    EXPECT_TRUE(out.report["results"][1]["p_value"].is_null());
    EXPECT_FALSE(out.report["results"][1]["error"].is_null());
    const std::string text = dump_report(out.report);
    EXPECT_EQ(text.back(), '\n');
    EXPECT_EQ(text.find("NaN"), std::string::npos);
}

TEST(Report, RatioReport) {
    RatioRequest req;
    req.n = {10};
    req.p = {1, 4};
    req.c = {0.8};
    req.S = 2000;
    const RunOutput out = run_ratio(req);
    ASSERT_EQ(out.report["records"].size(), 2u);
    EXPECT_EQ(out.report["records"][0]["ratio"].get<double>(), 2.0);
}

TEST(Report, HypothesisNamesUnknownGroup) {
    Dataset d = ingest_csv_text(kTiny, {});
    RunConfig cfg;
    cfg.hypothesis = HypothesisSpec{{"zzz"}, Matrix::Identity(2, 2), Vector::Zero(2)};
    EXPECT_THROW(run_hypothesis_on(cfg, d), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Binary
// ---------------------------------------------------------------------------

TEST(Binary, RepeatedRunsAreByteIdentical) {
    TempDir dir;
    write_synth(dir);
    const std::string base = "test --config " + (dir / "run.cfg").string() + " --s-pvalue 500 --s-quantile 500";
    ASSERT_EQ(run_binary(base + " --out " + (dir / "a.json").string() + " --csv " + (dir / "a.csv").string()), 0);
    ASSERT_EQ(run_binary(base + " --out " + (dir / "b.json").string() + " --csv " + (dir / "b.csv").string()), 0);
    ASSERT_EQ(run_binary(base + " --threads 4 --out " + (dir / "c.json").string()), 0);
    const std::string a = read_file(dir / "a.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(dir / "b.json"));
    EXPECT_EQ(a, read_file(dir / "c.json"));
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
}

TEST(Binary, ReportConfigEchoReruns) {
    TempDir dir;
    write_synth(dir);
    ASSERT_EQ(run_binary("test --config " + (dir / "run.cfg").string() +
                         " --s-pvalue 400 --s-quantile 400 --seed 12 --out " + (dir / "a.json").string()),
              0);
    ASSERT_EQ(run_binary("test --config " + (dir / "a.json").string() + " --out " + (dir / "b.json").string()), 0);
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
}

TEST(Binary, SeedFromEnvironment) {
    TempDir dir;
    write_synth(dir, 12);
    const std::string base = "test --config " + (dir / "run.cfg").string() + " --s-pvalue 300 --s-quantile 300";
    ASSERT_EQ(run_binary(base + " --out " + (dir / "a.json").string(), "FABTEST_SEED=4242"), 0);
    ASSERT_EQ(run_binary(base + " --seed 4242 --out " + (dir / "b.json").string()), 0);
    ASSERT_EQ(run_binary(base + " --out " + (dir / "c.json").string()), 0);
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
    EXPECT_NE(read_file(dir / "a.json"), read_file(dir / "c.json"));
}

TEST(Binary, ExitCodes) {
    TempDir dir;
    EXPECT_EQ(run_binary("test --data " + (dir / "missing.csv").string()), 2);
    EXPECT_EQ(run_binary("no-such-command"), 2);
    write_text_file((dir / "bad.csv").string(), "group,y,x\na,0,2\na,0,1\nb,1,1\nb,2,3\nb,0.5,1\nc,1,2\nc,3,1\nc,2,2\n");
    EXPECT_EQ(run_binary("test --data " + (dir / "bad.csv").string() + " --s-pvalue 100 --s-quantile 100 --out " +
                         (dir / "r.json").string()),
              1);
    EXPECT_EQ(run_binary("ratio --n 10 --p 4 --c 0.8 --out " + (dir / "ratio.json").string()), 0);
    EXPECT_NE(read_file(dir / "ratio.json").find("\"ratio\""), std::string::npos);
}

TEST(Binary, HypothesisSubcommand) {
    TempDir dir;
    write_synth(dir, 20);
    const std::string cmd = "hypothesis --config " + (dir / "run.cfg").string() +
                            " --s-pvalue 300 --s-quantile 300 --groups s01,s02"
                            " --A \"1,0,0,-1,0,0;0,1,0,0,-1,0;0,0,1,0,0,-1\" --v 0,0,0 --out " +
                            (dir / "h.json").string();
    ASSERT_EQ(run_binary(cmd), 0);
    const Json r = Json::parse(read_file(dir / "h.json"));
    EXPECT_EQ(r["command"], "hypothesis");
    EXPECT_EQ(r["results"][0]["group"], "s01+s02");
}
