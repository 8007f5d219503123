#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sbtd/io.hpp"

#include "helpers.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sbtd;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string out_path = "cli_stdout.txt";
    const std::string cmd = std::string(SBTD_CLI_PATH) + " " + args + " > " + out_path + " 2>cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    res.out = ss.str();
    return res;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path dir;
    TempDir() : dir(fs::temp_directory_path() / "sbtd_cli_test") {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("decomposition documents round trip through JSON") {
    const Sbtd s = gen_random_sbtd({4, 3, 2},
                                   {TermSpec{CoreStructure::FullRank, {2, 2, 1}},
                                    TermSpec{CoreStructure::Rank1, {1, 1, 1}}},
                                   3);
    const nlohmann::json doc = sbtd_to_json(s);
    const Sbtd back = sbtd_from_json(doc);
    REQUIRE(back.terms.size() == s.terms.size());
    CHECK(back.ambient_dims == s.ambient_dims);
    for (size_t r = 0; r < s.terms.size(); ++r) {
        CHECK(back.terms[r].structure == s.terms[r].structure);
        CHECK(back.terms[r].core.data() == s.terms[r].core.data());
        for (size_t d = 0; d < 3; ++d)
            CHECK((back.terms[r].factors[d] - s.terms[r].factors[d]).norm() == 0.0);
    }
    // serialization is lossless: dumping twice gives identical bytes
    CHECK(sbtd_to_json(back).dump() == doc.dump());
}

TEST_CASE("document errors name the offending field") {
    nlohmann::json doc = sbtd_to_json(
        gen_random_sbtd({3, 3, 2}, {TermSpec{CoreStructure::FullRank, {2, 2, 1}}}, 5));
    doc["terms"][0]["factors"][1] = nlohmann::json::array();
    try {
        sbtd_from_json(doc);
        FAIL("expected DocumentError");
    } catch (const DocumentError& e) {
        CHECK(std::string(e.what()).find("terms[0].factors[1]") != std::string::npos);
    }
    doc = sbtd_to_json(gen_random_sbtd({3, 3, 2}, {TermSpec{CoreStructure::FullRank, {2, 2, 1}}}, 5));
    doc["terms"][0]["core"]["data"].push_back(1.0);
    CHECK_THROWS_AS(sbtd_from_json(doc), DocumentError);
}

TEST_CASE("condition reports round trip through JSON, including infinity") {
    ConditionReport rep;
    rep.kappa = std::numeric_limits<double>::infinity();
    rep.sigma_min = 3.25e-17;
    rep.method = CondMethod::Compressed;
    rep.ill_posed = true;
    rep.terracini_rows = 32;
    rep.terracini_cols = 26;
    rep.compressed_dims = std::vector<Index>{4, 4, 2};
    rep.wall_time_s = 0.125;
    const ConditionReport back = report_from_json(report_to_json(rep));
    CHECK(std::isinf(back.kappa));
    CHECK(back.sigma_min == rep.sigma_min);
    CHECK(back.method == CondMethod::Compressed);
    CHECK(back.ill_posed);
    CHECK(back.terracini_rows == 32);
    CHECK(back.terracini_cols == 26);
    CHECK(*back.compressed_dims == *rep.compressed_dims);
    CHECK(back.wall_time_s == rep.wall_time_s);
    CHECK(report_to_json(back).dump() == report_to_json(rep).dump());

    ProbeResult pr{100, 0.5, 0.25, 2.0, 2.0};
    CHECK(probe_to_json(probe_from_json(probe_to_json(pr))).dump() == probe_to_json(pr).dump());
}

TEST_CASE("gen is deterministic and writes the documented default shapes") {
    TempDir tmp;
    const std::string core1 = tmp / "core1.json", core2 = tmp / "core2.json";
    const std::string infl = tmp / "infl.json";
    RunResult r1 = run_cli("gen --model illcond-btd --seed 7 --param N=100 --out " + core1 +
                           " --out-inflated " + infl);
    REQUIRE(r1.exit_code == 0);
    RunResult r2 = run_cli("gen --model illcond-btd --seed 7 --param N=100 --out " + core2);
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(core1) == read_file(core2));

    const Sbtd core = load_decomposition(core1);
    CHECK(core.ambient_dims == std::vector<Index>{4, 4, 2});
    CHECK(validate(core).ok);
    const Sbtd big = load_decomposition(infl);
    CHECK(big.ambient_dims == std::vector<Index>{60, 40, 40});
    CHECK(validate(big).ok);
}

TEST_CASE("gen random-cpd round trips and validates") {
    TempDir tmp;
    const std::string path = tmp / "cpd.json";
    REQUIRE(run_cli("gen --model random-cpd --seed 11 --param dims=5,5,5 --param rank=3 --out " +
                    path).exit_code == 0);
    const Sbtd s = load_decomposition(path);
    CHECK(s.ambient_dims == std::vector<Index>{5, 5, 5});
    CHECK(s.terms.size() == 3);
    CHECK(validate(s).ok);
}

TEST_CASE("cond on an odeco fixture reports kappa 1 for both methods") {
    TempDir tmp;
    const std::string path = tmp / "odeco.json";
    const std::vector<TermSpec> specs(2, TermSpec{CoreStructure::Rank1, {1, 1, 1}});
    save_decomposition(path, testutil::gen_odeco_sbtd({4, 4, 4}, specs, 19));
    const RunResult r = run_cli("cond --decomp " + path + " --method both --format json");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json out = nlohmann::json::parse(r.out);
    CHECK(std::abs(out["direct"]["kappa"].get<double>() - 1.0) <= 1e-12);
    CHECK(std::abs(out["compressed"]["kappa"].get<double>() - 1.0) <= 1e-12);
    CHECK(out["kappa_rel_discrepancy"].get<double>() <= 1e-12);
}

TEST_CASE("cond on the generated diverging-family fixture agrees across methods") {
    TempDir tmp;
    const std::string path = tmp / "illcond.json";
    REQUIRE(run_cli("gen --model illcond-btd --seed 42 --param N=100 --out " + path).exit_code ==
            0);
    const RunResult r = run_cli("cond --decomp " + path + " --method both --format json");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json out = nlohmann::json::parse(r.out);
    CHECK(out["kappa_rel_discrepancy"].get<double>() <= 1e-8);
}

TEST_CASE("cond fails cleanly on malformed input") {
    TempDir tmp;
    const std::string path = tmp / "broken.json";
    std::ofstream(path) << "{ not json";
    const RunResult r = run_cli("cond --decomp " + path);
    CHECK(r.exit_code == 1);
    CHECK(r.out.empty());  // no partial output
    CHECK(run_cli("cond --decomp " + (tmp / "missing.json")).exit_code == 1);
}

TEST_CASE("cond --fail-on-illposed exits with code 2") {
    TempDir tmp;
    const std::string path = tmp / "illposed.json";
    save_decomposition(path, testutil::gen_shared_modes_illposed(23));
    CHECK(run_cli("cond --decomp " + path).exit_code == 0);
    CHECK(run_cli("cond --decomp " + path + " --fail-on-illposed").exit_code == 2);
}

TEST_CASE("probe on an odeco fixture stays at ratio <= 1") {
    TempDir tmp;
    const std::string path = tmp / "odeco.json";
    const std::vector<TermSpec> specs(2, TermSpec{CoreStructure::Rank1, {1, 1, 1}});
    save_decomposition(path, testutil::gen_odeco_sbtd({3, 3, 3}, specs, 29));
    const RunResult r =
        run_cli("probe --decomp " + path + " --samples 200 --seed 5 --singular-direction");
    REQUIRE(r.exit_code == 0);
    const ProbeResult res = probe_from_json(nlohmann::json::parse(r.out));
    CHECK(res.max_ratio <= res.kappa_ref * (1 + 1e-8));
    CHECK(res.kappa_ref == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("probe exits 2 on ill-posed input") {
    TempDir tmp;
    const std::string path = tmp / "illposed.json";
    save_decomposition(path, testutil::gen_shared_kernel_illposed(31));
    CHECK(run_cli("probe --decomp " + path + " --samples 10").exit_code == 2);
}

TEST_CASE("verify passes on a small run and trivially on zero trials") {
    const RunResult r = run_cli("verify --trials 5 --seed 3");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json out = nlohmann::json::parse(r.out);
    CHECK(out["trials"].get<int>() == 5);
    CHECK(out["passed"].get<int>() + out["skipped"].get<int>() == 5);

    const RunResult zero = run_cli("verify --trials 0");
    CHECK(zero.exit_code == 0);
}

TEST_CASE("verify accepts near-singular instances under a relaxed tolerance") {
    const RunResult r = run_cli("verify --trials 8 --seed 9 --tol 1e-6 --max-kappa 1e10");
    CHECK(r.exit_code == 0);
}

TEST_CASE("probe on a diverging-family fixture stays below kappa") {
    TempDir tmp;
    const std::string path = tmp / "illcond.json";
    REQUIRE(run_cli("gen --model illcond-btd --seed 13 --param N=150 --out " + path).exit_code ==
            0);
    const RunResult r = run_cli("probe --decomp " + path + " --samples 500 --seed 2");
    REQUIRE(r.exit_code == 0);
    const ProbeResult res = probe_from_json(nlohmann::json::parse(r.out));
    CHECK(res.kappa_ref > 1e4);  // genuinely ill-conditioned
    CHECK(res.max_ratio <= res.kappa_ref * (1 + 1e-8));
}

TEST_CASE("bench emits one record per configuration") {
    const RunResult r =
        run_cli("bench --dims 8,8,8 --ranks 1,1,1x2 --dims 6,6,6 --ranks 2,2,2x1 --repeat 1");
    REQUIRE(r.exit_code == 0);
    std::stringstream ss(r.out);
    std::string line;
    int records = 0;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const nlohmann::json rec = nlohmann::json::parse(line);
        CHECK(rec.contains("t_direct_s"));
        CHECK(rec.contains("t_compressed_s"));
        CHECK(rec.contains("speedup"));
        CHECK(rec.contains("predicted_ratio"));
        ++records;
    }
    CHECK(records == 2);
}

TEST_CASE("bench handles shapes where compression cannot shrink") {
    // stacked factor widths reach the ambient dims: every mode is skipped and
    // the compressed route just adds overhead (predicted ratio < 1)
    const RunResult r = run_cli("bench --dims 4,4,4 --ranks 2,2,2x2 --repeat 1");
    REQUIRE(r.exit_code == 0);
    const nlohmann::json rec = nlohmann::json::parse(r.out);
    CHECK(rec["predicted_ratio"].get<double>() < 1.0);
    CHECK(rec.contains("speedup"));
}

TEST_CASE("gen leaves no file behind on infeasible requests") {
    TempDir tmp;
    const std::string path = tmp / "never.json";
    const RunResult rank_too_big =
        run_cli("gen --model random-btd --param dims=2,2,2 --param ranks=3,1,1 --out " + path);
    CHECK(rank_too_big.exit_code == 1);
    CHECK(!fs::exists(path));
    const RunResult bad_param =
        run_cli("gen --model random-cpd --param bogus --out " + path);
    CHECK(bad_param.exit_code == 1);
    CHECK(!fs::exists(path));
}
