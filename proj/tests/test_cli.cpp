// End-to-end checks of the command-line pipeline. CLI_BIN is injected by the
// build with the path to the built executable.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using std::filesystem::path;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CLI_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

path temp_dir(const std::string& tag) {
    path p = std::filesystem::temp_directory_path() / ("hsicae_cli_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("synth writes four deterministic files") {
    auto dir = temp_dir("synth");
    const std::string flags = "synth --rows 16 --cols 16 --bands 12 --r 3 --seed 7 --out ";
    REQUIRE(run(flags + (dir / "a").string()) == 0);
    CHECK(std::filesystem::exists(dir / "a" / "scene.hdr"));
    CHECK(std::filesystem::exists(dir / "a" / "scene.bsq"));
    CHECK(std::filesystem::exists(dir / "a" / "gt_endmembers.csv"));
    CHECK(std::filesystem::exists(dir / "a" / "gt_abundances.csv"));

    REQUIRE(run(flags + (dir / "b").string()) == 0);
    CHECK(slurp(dir / "a" / "scene.bsq") == slurp(dir / "b" / "scene.bsq"));
    CHECK(slurp(dir / "a" / "gt_endmembers.csv") == slurp(dir / "b" / "gt_endmembers.csv"));
    CHECK(slurp(dir / "a" / "gt_abundances.csv") == slurp(dir / "b" / "gt_abundances.csv"));
}

TEST_CASE("synth with bands < r exits 2") {
    auto dir = temp_dir("synthbad");
    CHECK(run("synth --rows 8 --cols 8 --bands 2 --r 3 --out " + (dir / "x").string()) == 2);
}

TEST_CASE("train, unmix --verify, eval, featmaps round trip") {
    auto dir = temp_dir("pipeline");
    REQUIRE(run("synth --rows 16 --cols 16 --bands 10 --r 2 --seed 3 --out " +
                (dir / "scene").string()) == 0);
    const std::string cube = (dir / "scene" / "scene.hdr").string();

    REQUIRE(run("train --cube " + cube + " --r 2 --epochs 3 --seed 1 --out " +
                (dir / "run").string()) == 0);
    CHECK(count_lines(dir / "run" / "loss.csv") == 3);

    const std::string ckpt = (dir / "run" / "model.cae").string();
    REQUIRE(run("unmix --checkpoint " + ckpt + " --cube " + cube + " --verify --out " +
                (dir / "factors").string()) == 0);
    CHECK(std::filesystem::exists(dir / "factors" / "endmembers.csv"));
    CHECK(std::filesystem::exists(dir / "factors" / "abundances.csv"));
    CHECK(std::filesystem::exists(dir / "factors" / "abundance_0.pgm"));
    CHECK(std::filesystem::exists(dir / "factors" / "abundance_1.pgm"));

    // est == gt must score all zeros
    CHECK(run("eval --est-endmembers " + (dir / "scene" / "gt_endmembers.csv").string() +
              " --est-abundances " + (dir / "scene" / "gt_abundances.csv").string() +
              " --gt-endmembers " + (dir / "scene" / "gt_endmembers.csv").string() +
              " --gt-abundances " + (dir / "scene" / "gt_abundances.csv").string() +
              " --out " + (dir / "report.csv").string()) == 0);
    {
        std::ifstream rep(dir / "report.csv");
        std::string line;
        while (std::getline(rep, line)) {
            CHECK(line.find(",0,0") != std::string::npos);
        }
    }

    REQUIRE(run("featmaps --checkpoint " + ckpt + " --cube " + cube + " --band 0 --out " +
                (dir / "maps").string()) == 0);
    std::size_t pgms = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "maps"))
        if (e.path().extension() == ".pgm") ++pgms;
    CHECK(pgms == 32);

    CHECK(run("featmaps --checkpoint " + ckpt + " --cube " + cube + " --band 99 --out " +
              (dir / "maps2").string()) == 2);
}

TEST_CASE("train on a non-square cube exits 2") {
    auto dir = temp_dir("nonsquare");
    REQUIRE(run("synth --rows 16 --cols 12 --bands 6 --r 2 --out " +
                (dir / "scene").string()) == 0);
    CHECK(run("train --cube " + (dir / "scene" / "scene.hdr").string() +
              " --r 2 --epochs 1 --out " + (dir / "run").string()) == 2);
}

TEST_CASE("nmf subcommand writes factors and a non-increasing objective") {
    auto dir = temp_dir("nmf");
    REQUIRE(run("synth --rows 16 --cols 16 --bands 10 --r 3 --seed 5 --out " +
                (dir / "scene").string()) == 0);
    REQUIRE(run("nmf --cube " + (dir / "scene" / "scene.hdr").string() +
                " --r 3 --iters 200 --seed 0 --out " + (dir / "out").string()) == 0);
    CHECK(std::filesystem::exists(dir / "out" / "endmembers.csv"));
    CHECK(std::filesystem::exists(dir / "out" / "abundances.csv"));

    std::ifstream trace(dir / "out" / "objective.csv");
    std::string line;
    double prev = 1e300;
    while (std::getline(trace, line)) {
        const double v = std::stod(line.substr(line.find(',') + 1));
        CHECK(v <= prev + 1e-9);
        prev = v;
    }
}

TEST_CASE("gradcheck subcommand passes") { CHECK(run("gradcheck") == 0); }

TEST_CASE("unknown flags exit 2") { CHECK(run("train --nope") == 2); }
