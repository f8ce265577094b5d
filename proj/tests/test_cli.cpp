#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() / ("hdout-cli-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const std::string& args) {
    const auto log = work_dir() / "last.log";
    const std::string cmd = std::string("\"") + HDOUT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(log);
    return r;
}

fs::path write_config(const std::string& name, const std::string& body) {
    const auto p = work_dir() / name;
    std::ofstream(p) << body;
    return p;
}

/// The single run directory under out/<scenario>.
fs::path only_run(const fs::path& out, const std::string& scenario) {
    fs::path found;
    int count = 0;
    for (const auto& e : fs::directory_iterator(out / scenario)) {
        found = e.path();
        ++count;
    }
    REQUIRE(count == 1);
    return found;
}

const char* kSpiked = R"({
  "name": "spiked_ok",
  "seed": 3,
  "replications": 4,
  "sweep": [{"n": 100, "d": 100}],
  "model": {"family": "spiked", "spikes": [{"delta": {"coefficient": 1, "exponent": 1.2}}]}
})";

// ratio tolerance far below the sampling noise: the eigenvalue check must fail
const char* kFailing = R"({
  "name": "too_tight",
  "seed": 3,
  "replications": 4,
  "sweep": [{"n": 100, "d": 100}],
  "tolerances": {"ratio": 1e-6},
  "model": {"family": "spiked", "spikes": [{"delta": {"coefficient": 1, "exponent": 1.2}}]}
})";

} // namespace

TEST_CASE("help lists subcommands and flags") {
    auto r = run("--help");
    CHECK(r.code == 0);
    for (const char* sub : {"generate", "spectrum", "geometry", "verify-eigenvalues", "verify-eigenvectors",
                            "toy-example", "sweep"})
        CHECK(r.out.find(sub) != std::string::npos);
    r = run("sweep --help");
    CHECK(r.code == 0);
    for (const char* flag : {"--config", "--seed", "--reps", "--threads", "--out", "--format"})
        CHECK(r.out.find(flag) != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("generate").code == 2);
    CHECK(run("generate --config a.json --bogus").code == 2);
    CHECK(run("generate --config /nonexistent.json").code == 2);
    const auto bad = write_config("bad.json", R"({"sweep": [{"n": 5, "d": 5}], "model": {"family": "nope"}})");
    CHECK(run("sweep --config " + bad.string()).code == 2);
    const auto cfg = write_config("spiked.json", kSpiked);
    CHECK(run("sweep --config " + cfg.string() + " --format xml").code == 2);
}

TEST_CASE("generate is deterministic") {
    const auto cfg = write_config("spiked.json", kSpiked);
    const auto out1 = work_dir() / "gen1", out2 = work_dir() / "gen2";
    REQUIRE(run("generate --config " + cfg.string() + " --out " + out1.string()).code == 0);
    REQUIRE(run("generate --config " + cfg.string() + " --out " + out2.string()).code == 0);
    const auto a = only_run(out1, "spiked_ok"), b = only_run(out2, "spiked_ok");
    CHECK(fs::exists(a / "dataset.csv"));
    CHECK(fs::exists(a / "memberships.json"));
    CHECK(slurp(a / "dataset.csv") == slurp(b / "dataset.csv"));

    const auto out3 = work_dir() / "gen3";
    REQUIRE(run("generate --config " + cfg.string() + " --seed 4 --out " + out3.string()).code == 0);
    CHECK(slurp(a / "dataset.csv") != slurp(only_run(out3, "spiked_ok") / "dataset.csv"));
}

TEST_CASE("spectrum writes eigenvalues and eigenvectors") {
    const auto cfg = write_config("spiked.json", kSpiked);
    const auto out = work_dir() / "spec";
    REQUIRE(run("spectrum --config " + cfg.string() + " --eigenvectors --top-k 3 --format json --out " + out.string())
                .code == 0);
    const auto dir = only_run(out, "spiked_ok");
    const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
    CHECK(j["eigenvalues"].size() == 3);
    CHECK(fs::exists(dir / "eigenvectors.json"));
}

TEST_CASE("verify-eigenvalues passes on a strong spike") {
    const auto cfg = write_config("spiked.json", kSpiked);
    const auto out = work_dir() / "ev";
    const auto r = run("verify-eigenvalues --config " + cfg.string() + " --out " + out.string());
    CHECK(r.code == 0);
    const auto dir = only_run(out, "spiked_ok");
    const auto regime = nlohmann::json::parse(slurp(dir / "regime.json"));
    REQUIRE(regime.size() == 1);
    CHECK(regime[0]["regime"] == "all_strong");
    CHECK(regime[0]["per_tier"][0]["verdict"] == "pass");
    CHECK(fs::exists(dir / "checks.csv"));
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "statistics.csv"));
}

TEST_CASE("a failing check exits with 1") {
    const auto cfg = write_config("failing.json", kFailing);
    const auto out = work_dir() / "fail";
    const auto r = run("verify-eigenvalues --config " + cfg.string() + " --out " + out.string());
    CHECK(r.code == 1);
    const auto report = nlohmann::json::parse(slurp(only_run(out, "too_tight") / "report.json"));
    CHECK(report["passed"] == false);
    bool saw_fail = false;
    for (const auto& c : report["checks"]) saw_fail = saw_fail || c["verdict"] == "fail";
    CHECK(saw_fail);
}

TEST_CASE("toy-example writes the table") {
    const auto out = work_dir() / "toy";
    const auto r = run("toy-example --seed 7 --reps 2 --threads 2 --out " + out.string());
    CHECK((r.code == 0 || r.code == 1));
    CHECK(r.out.find("median eigenvalues") != std::string::npos);
    const auto dir = only_run(out, "toy");
    CHECK(fs::exists(dir / "toy_table.csv"));
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["toy"]["seeds"].size() == 2);
    CHECK(report["passed"] == (r.code == 0));
}

TEST_CASE("output directory from the environment") {
    const auto cfg = write_config("spiked.json", kSpiked);
    const auto out = work_dir() / "env";
    ::setenv("HDOUT_OUT_DIR", out.string().c_str(), 1);
    CHECK(run("generate --config " + cfg.string()).code == 0);
    ::unsetenv("HDOUT_OUT_DIR");
    CHECK(fs::exists(out / "spiked_ok"));
}
