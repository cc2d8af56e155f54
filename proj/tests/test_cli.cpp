#include <doctest.h>

#include <fstream>
#include <sstream>

#include "kscope/cli.hpp"
#include "kscope/dataset.hpp"
#include "kscope/parallel.hpp"
#include "kscope/sampling.hpp"
#include "oracles.hpp"

using namespace kscope;
namespace fs = std::filesystem;

namespace {

int kscope_run(std::vector<std::string> args) {
    args.insert(args.begin(), "kscope");
    const int code = cli::run(args);
    set_thread_count(1);
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 1") {
    CHECK(kscope_run({}) == cli::kUsage);
    CHECK(kscope_run({"frobnicate"}) == cli::kUsage);
    CHECK(kscope_run({"mask", "--mode", "fixed", "--width", "64"}) == cli::kUsage);  // no --out
    const auto dir = oracle::scratch("cli_usage");
    CHECK(kscope_run({"mask", "--mode", "fixed", "--width", "64", "--out", (dir / "m.json").string()}) == cli::kUsage);
    CHECK(kscope_run({"mask", "--mode", "spiral", "--width", "64", "--out", (dir / "m.json").string()}) == cli::kUsage);
    CHECK(kscope_run({"--profile", "cluster", "mask", "--mode", "variable", "--width", "64", "--out",
                      (dir / "m.json").string()}) == cli::kUsage);
}

TEST_CASE("missing or malformed inputs exit with code 2") {
    const auto dir = oracle::scratch("cli_data");
    CHECK(kscope_run({"recon", "--method", "zf", "--in", (dir / "nope").string(), "--mask", (dir / "m.json").string(),
                      "--out", (dir / "out").string()}) == cli::kData);
    REQUIRE(kscope_run({"phantom-gen", "--grid", "16", "--volumes", "1", "--slices", "1", "--coils", "2", "--out",
                        (dir / "ph").string()}) == cli::kOk);
    std::ofstream(dir / "bad.json") << R"({"width": 16, "acquired": [0], "acs": [7, 9]})";
    CHECK(kscope_run({"recon", "--method", "zf", "--in", (dir / "ph").string(), "--mask", (dir / "bad.json").string(),
                      "--out", (dir / "out").string()}) == cli::kData);
    REQUIRE(kscope_run({"mask", "--mode", "fixed", "--width", "32", "--accel", "4", "--out", (dir / "m32.json").string()}) ==
            cli::kOk);
    CHECK(kscope_run({"recon", "--method", "zf", "--in", (dir / "ph").string(), "--mask", (dir / "m32.json").string(),
                      "--out", (dir / "out").string()}) == cli::kData);
}

TEST_CASE("variable masks are reproducible from the seed") {
    const auto dir = oracle::scratch("cli_mask");
    for (const char* name : {"a.json", "b.json"})
        REQUIRE(kscope_run({"mask", "--mode", "variable", "--width", "64", "--min-lines", "8", "--seed", "77", "--out",
                            (dir / name).string()}) == cli::kOk);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    std::ifstream f(dir / "a.json");
    const auto m = mask_from_json(nlohmann::json::parse(f));
    Rng rng(77);
    CHECK(m == sample_variable_mask(64, 8, 0.08, rng));
    CHECK(fs::exists(dir / "mask.config.json"));
    CHECK(fs::exists(dir / "mask.log"));
}

TEST_CASE("outputs do not depend on the thread count") {
    const auto dir = oracle::scratch("cli_threads");
    for (const char* t : {"1", "3"}) {
        const auto out = dir / (std::string("t") + t);
        REQUIRE(kscope_run({"--threads", t, "phantom-gen", "--grid", "24", "--volumes", "2", "--slices", "2", "--seed", "5",
                            "--out", (out / "ph").string()}) == cli::kOk);
        REQUIRE(kscope_run({"--threads", t, "train-recon", "--data", (out / "ph").string(), "--epochs", "1",
                            "--cascades", "1", "--channels", "4", "--batch", "2", "--out", (out / "v.bin").string()}) ==
                cli::kOk);
    }
    for (const auto& v : list_volumes(dir / "t1" / "ph"))
        CHECK(slurp(v / "slices.bin") == slurp(dir / "t3" / "ph" / v.filename() / "slices.bin"));
    CHECK(slurp(dir / "t1" / "v.bin") == slurp(dir / "t3" / "v.bin"));
    auto echo = [&](const char* t) {
        std::ifstream f(dir / t / "ph" / "phantom-gen.config.json");
        auto j = nlohmann::json::parse(f);
        j.erase("out");
        return j;
    };
    CHECK(echo("t1") == echo("t3"));
}

TEST_CASE("profiles come from the embedded defaults") {
    const auto desk = cli::profile_defaults("desk"), paper = cli::profile_defaults("paper");
    CHECK(desk["grid"] == 128);
    CHECK(paper["grid"] == 368);
    CHECK(paper["coils"] == 15);
    CHECK(desk["threshold"] == 0.1);
    CHECK_THROWS_AS(cli::profile_defaults("cluster"), std::invalid_argument);
}

}  // TEST_SUITE
