#include "doctest.h"

#include "epdic/cli.hpp"
#include "epdic/io.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace epdic;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "epdic_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

const fs::path& small_wages()
{
    static const fs::path path = [] {
        const fs::path p = scratch_dir("fixtures") / "wages.csv";
        write_synthetic_wages(p.string(), 2, 60, 7);
        write_synthetic_ai4i((p.parent_path() / "ai4i.csv").string(), 2, 400);
        return p;
    }();
    return path;
}

fs::path small_ai4i()
{
    return small_wages().parent_path() / "ai4i.csv";
}

} // namespace

TEST_CASE("usage errors exit 1 and print usage")
{
    Outcome r = run({"simulate", "--bogus"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--bogus") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(r.err.find("--scheme") != std::string::npos);

    r = run({});
    CHECK(r.code == 1);
    CHECK(r.err.find("simulate") != std::string::npos);

    r = run({"frobnicate"});
    CHECK(r.code == 1);

    r = run({"simulate", "--reps", "abc"});
    CHECK(r.code == 1);

    r = run({"simulate", "--scheme", "sideways", "--out", scratch_dir("badscheme").string()});
    CHECK(r.code == 1);

    r = run({"fit", "--data", "x.csv"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--response") != std::string::npos);

    r = run({"fit", "--data", "/nonexistent/file.csv", "--response", "y", "--covariates", "x",
             "--out", scratch_dir("nofile").string()});
    CHECK(r.code == 1);

    r = run({"simulate", "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--deltas") != std::string::npos);

    r = run({"--version"});
    CHECK(r.code == 0);
    CHECK(r.out.find(kVersionString) != std::string::npos);
}

TEST_CASE("simulate writes records, summary and a manifest echoing the resolved options")
{
    const fs::path dir = scratch_dir("simulate");
    const Outcome r = run({"simulate", "--scheme", "1", "--delta", "0.093", "--reps", "4", "--seed", "7",
                           "--out", dir.string()});
    REQUIRE(r.code == 0);
    const Table rec = read_table((dir / "simulate_records.csv").string());
    CHECK(rec.rows.size() == 12);  // 4 reps x 3 estimators
    CHECK(rec.header.front() == "delta");
    const Table sum = read_table((dir / "simulate_summary.csv").string());
    CHECK(sum.rows.size() == 3);
    const auto m = nlohmann::json::parse(slurp(dir / "simulate_manifest.json"));
    CHECK(m["command"] == "simulate");
    CHECK(m["seed"] == 7);
    CHECK(m["version"] == kVersionString);
    CHECK(m["config"]["scheme"] == "1");
    CHECK(m["config"]["delta"] == "0.093");
    CHECK(m["config"]["reps"] == "4");
    CHECK(m["config"]["n"] == "150");
    CHECK(m["config"]["gsm"] == false);
    CHECK(m["outputs"].size() == 4);
    for (const auto& name : m["outputs"])
        CHECK(fs::exists(dir / name.get<std::string>()));
}

TEST_CASE("same seed gives byte-identical files; a different seed does not")
{
    const fs::path a = scratch_dir("seed_a"), b = scratch_dir("seed_b"), c = scratch_dir("seed_c");
    const std::vector<std::string> base = {"simulate", "--scheme", "error", "--delta", "0.1", "--reps", "3"};
    auto with = [&](const fs::path& dir, const char* seed, const char* threads) {
        auto args = base;
        args.insert(args.end(), {"--seed", seed, "--out", dir.string(), "--threads", threads});
        return run(args).code;
    };
    REQUIRE(with(a, "5", "1") == 0);
    REQUIRE(with(b, "5", "3") == 0);
    REQUIRE(with(c, "6", "1") == 0);
    CHECK(slurp(a / "simulate_records.csv") == slurp(b / "simulate_records.csv"));
    CHECK(slurp(a / "simulate_summary.csv") == slurp(b / "simulate_summary.csv"));
    CHECK(slurp(a / "simulate_records.csv") != slurp(c / "simulate_records.csv"));
}

TEST_CASE("config file supplies options and flags override it")
{
    const fs::path dir = scratch_dir("config");
    const fs::path cfg = dir / "run.cfg";
    std::ofstream(cfg) << "# small study\nscheme = error\ndelta=0.05\nreps = 2\n\nseed = 3   # base seed\n";
    Outcome r = run({"simulate", "--config", cfg.string(), "--out", dir.string()});
    REQUIRE(r.code == 0);
    auto m = nlohmann::json::parse(slurp(dir / "simulate_manifest.json"));
    CHECK(m["config"]["scheme"] == "error");
    CHECK(m["config"]["reps"] == "2");
    CHECK(m["seed"] == 3);

    r = run({"simulate", "--config", cfg.string(), "--reps", "1", "--out", dir.string()});
    REQUIRE(r.code == 0);
    m = nlohmann::json::parse(slurp(dir / "simulate_manifest.json"));
    CHECK(m["config"]["reps"] == "1");
    CHECK(read_table((dir / "simulate_records.csv").string()).rows.size() == 3);

    std::ofstream(dir / "bad.cfg") << "reps = 2\nwarp_factor = 9\n";
    r = run({"simulate", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("warp_factor") != std::string::npos);

    std::ofstream(dir / "noeq.cfg") << "reps 2\n";
    CHECK(run({"simulate", "--config", (dir / "noeq.cfg").string()}).code == 1);
    CHECK(run({"simulate", "--config", (dir / "missing.cfg").string()}).code == 1);
}

TEST_CASE("fit, tune and influence on simulated and CSV data")
{
    const fs::path dir = scratch_dir("fit");
    REQUIRE(run({"fit", "--n", "80", "--out", dir.string()}).code == 0);
    const Table crit = read_table((dir / "fit_criteria.csv").string());
    REQUIRE(crit.rows.size() == 3);
    CHECK(crit.rows[0][4] == "MLIC");
    CHECK(crit.rows[1][4] == "DPDIC");
    CHECK(crit.rows[2][4] == "EPDIC");
    const Table coef = read_table((dir / "fit_coefficients.csv").string());
    CHECK(coef.rows.size() == 3 * 6);

    // the same data through a CSV: the simulated design has no intercept
    const Table in = [&] {
        Table t;
        t.header = {"y", "a", "b"};
        std::mt19937_64 rng(3);
        std::normal_distribution<double> z;
        for (int i = 0; i < 60; ++i) {
            const double a = z(rng), b = z(rng);
            t.add_row({format_double(1.0 + 2.0 * a - b + 0.5 * z(rng)), format_double(a), format_double(b)});
        }
        return t;
    }();
    write_table((dir / "data.csv").string(), in);
    REQUIRE(run({"fit", "--data", (dir / "data.csv").string(), "--response", "y", "--covariates", "a,b",
                 "--estimator", "epde", "--out", dir.string()})
                .code == 0);
    const Table c2 = read_table((dir / "fit_coefficients.csv").string());
    REQUIRE(c2.rows.size() == 4);
    CHECK(c2.rows[0][1] == "intercept");
    CHECK(parse_double(c2.rows[1][2]) == doctest::Approx(2.0).epsilon(0.15));
    auto m = nlohmann::json::parse(slurp(dir / "fit_manifest.json"));
    CHECK(m["inputs"][0]["rows"] == 60);

    REQUIRE(run({"tune", "--n", "60", "--family", "dpd", "--out", dir.string()}).code == 0);
    const Table best = read_table((dir / "tune_best.csv").string());
    REQUIRE(best.rows.size() == 1);
    CHECK(best.rows[0][0] == "DPD");
    CHECK(run({"tune", "--family", "kl", "--out", dir.string()}).code == 1);

    REQUIRE(run({"influence", "--n", "60", "--points", "11", "--out", dir.string()}).code == 0);
    const Table b = read_table((dir / "influence_bounded.csv").string());
    REQUIRE(b.rows.size() == 3);
    CHECK(b.rows[0][4] == "false");  // likelihood
    CHECK(b.rows[2][4] == "true");   // EPD
    CHECK(read_table((dir / "influence_curve.csv").string()).rows.size() == 33);
}

TEST_CASE("panel and select on a small wage panel")
{
    const fs::path dir = scratch_dir("wages");
    REQUIRE(run({"panel", "--data", small_wages().string(), "--out", dir.string()}).code == 0);
    const Table crit = read_table((dir / "panel_criteria.csv").string());
    REQUIRE(crit.rows.size() == 3);
    for (const auto& row : crit.rows)
        CHECK(row[9] == "true");
    auto m = nlohmann::json::parse(slurp(dir / "panel_manifest.json"));
    CHECK(m["inputs"][0]["rows"] == 420);
    CHECK(m["inputs"][0]["response_sd"].get<double>() > 0.0);

    // raw log-wage: the exponential part has no interior minimum, a numerical failure
    const Outcome raw = run({"panel", "--data", small_wages().string(), "--raw-response", "--out", dir.string()});
    CHECK(raw.code == 2);

    REQUIRE(run({"select", "--data", small_wages().string(), "--covariates", "bluecol,smsa,married,sex,union,black",
                 "--criteria", "all", "--top-k", "15", "--out", dir.string()})
                .code == 0);
    const Table ranked = read_table((dir / "select_ranked.csv").string());
    CHECK(ranked.rows.size() == 3 * 63);
    const Table cons = read_table((dir / "select_consolidated.csv").string());
    CHECK(cons.header == std::vector<std::string>{"model", "freq", "sel_freq", "EPDIC", "DPDIC", "MLIC"});
    REQUIRE(!cons.rows.empty());
    CHECK(cons.rows.front()[1] == "3");
    CHECK(cons.rows.front()[2] == "1");
    for (const auto& row : cons.rows) {
        const int f = std::stoi(row[1]);
        CHECK(parse_double(row[2]) == doctest::Approx(f / 3.0).epsilon(1e-15));
    }

    REQUIRE(run({"select", "--data", small_wages().string(), "--criteria", "epdic", "--model", "pooled",
                 "--lambdas", "8", "--out", dir.string()})
                .code == 0);
    CHECK(fs::exists(dir / "select_lasso_path.csv"));
    CHECK(!read_table((dir / "select_screened.csv").string()).rows.empty());
    CHECK(run({"select", "--data", small_wages().string(), "--criteria", "aic", "--out", dir.string()}).code == 1);
}

TEST_CASE("nn ranks the four architectures")
{
    const fs::path dir = scratch_dir("nn");
    REQUIRE(run({"nn", "--data", small_ai4i().string(), "--epochs", "20", "--out", dir.string()}).code == 0);
    const Table t = read_table((dir / "nn_ranking.csv").string());
    CHECK(t.header == std::vector<std::string>{"architecture", "freq", "sel_freq", "EPDIC", "DPDIC", "MLIC"});
    CHECK(t.rows.size() == 4);
    CHECK(read_table((dir / "nn_training.csv").string()).rows.size() == 12);
    CHECK(run({"nn", "--out", dir.string()}).code == 1);
}
