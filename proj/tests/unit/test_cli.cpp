#include <doctest.h>

#include "tilediff/pyramid_io.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace tilediff;

namespace {

struct Outcome {
    int code = -1;
    std::string output;
};

// Runs the CLI with `args`, capturing stdout and stderr together.
Outcome run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" TILEDIFF_CLI_PATH "\" " + args + " 2>&1";
    Outcome out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.output.append(buf.data(), n);
    const int status = pclose(pipe);
    out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

struct Workspace {
    fs::path root = fs::temp_directory_path() / "tilediff_cli_test";
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
        std::ofstream(root / "desk.cfg") << "# desk-scale pyramid\n"
                                            "plan.levels = 2\n"
                                            "plan.patch_size = 16\n"
                                            "plan.channels = 3\n"
                                            "schedule.steps = 8\n"
                                            "guidance.r = 6\n";
    }
    ~Workspace() { fs::remove_all(root); }
    std::string path(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("generate writes a verifiable pyramid") {
    Workspace ws;
    const auto gen = run_cli("generate --config " + ws.path("desk.cfg") + " --seed 7 --out " + ws.path("p"));
    INFO(gen.output);
    REQUIRE(gen.code == 0);
    CHECK(gen.output.find("\"status\":\"ok\"") != std::string::npos);
    const PyramidManifest m = read_manifest(ws.path("p"));
    CHECK(m.complete);
    CHECK(m.levels.size() == 3);
    CHECK(m.seed == 7);
    CHECK(run_cli("verify " + ws.path("p")).code == 0);
}

TEST_CASE("the same seed twice gives identical checksums") {
    Workspace ws;
    REQUIRE(run_cli("generate --config " + ws.path("desk.cfg") + " --seed 11 --out " + ws.path("a")).code == 0);
    REQUIRE(run_cli("generate --config " + ws.path("desk.cfg") + " --seed 11 --workers 4 --out " + ws.path("b")).code == 0);
    const auto a = read_manifest(ws.path("a"));
    const auto b = read_manifest(ws.path("b"));
    REQUIRE(a.levels.size() == b.levels.size());
    for (std::size_t l = 0; l < a.levels.size(); ++l) CHECK(a.levels[l].checksum == b.levels[l].checksum);
}

TEST_CASE("verify names a tampered tile and exits nonzero") {
    Workspace ws;
    REQUIRE(run_cli("generate --config " + ws.path("desk.cfg") + " --seed 3 --out " + ws.path("p")).code == 0);
    const auto m = read_manifest(ws.path("p"));
    const std::string victim = m.levels[1].tiles[2].file(1);
    {
        std::fstream f(ws.root / "p" / victim, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(50);
        f.put('\x11');
    }
    const auto v = run_cli("verify " + ws.path("p"));
    CHECK(v.code == 3);
    CHECK(v.output.find(victim) != std::string::npos);
}

TEST_CASE("flags override the environment which overrides the file") {
    Workspace ws;
    const auto gen = run_cli("generate --config " + ws.path("desk.cfg") + " --levels 1 --out " + ws.path("p"),
                             "TILEDIFF_PLAN_LEVELS=0 TILEDIFF_SEED=99");
    REQUIRE(gen.code == 0);
    const auto m = read_manifest(ws.path("p"));
    CHECK(m.levels.size() == 2);
    CHECK(m.seed == 99);
}

TEST_CASE("upscale runs one stage on a raw input") {
    Workspace ws;
    write_raw(ws.root / "in.raw", ImagePlane(3, 16, 16, 50.0, 0.2));
    const auto up = run_cli("upscale --config " + ws.path("desk.cfg") + " --input " + ws.path("in.raw") + " --out " + ws.path("u"));
    INFO(up.output);
    REQUIRE(up.code == 0);
    const auto m = read_manifest(ws.path("u"));
    REQUIRE(m.levels.size() == 2);
    CHECK(m.levels[1].height == 32);
    CHECK(m.levels[1].resolution == 25.0);
}

TEST_CASE("evaluation subcommands write report tables") {
    Workspace ws;
    const auto seams = run_cli("eval-seams --seeds 2 --patch 16 --extent 64 --out " + ws.path("seams.tsv"));
    INFO(seams.output);
    CHECK(seams.code == 0);
    CHECK(fs::file_size(ws.root / "seams.tsv") > 0);
    const auto solver = run_cli("eval-solver --steps 10,20 --seeds 4 --out " + ws.path("solver.tsv"));
    CHECK(solver.code == 0);
    const auto relax = run_cli("eval-relaxation --r 0,4 --seeds 3 --patch 16 --out " + ws.path("relax.tsv"));
    CHECK(relax.code == 0);
    const auto bench = run_cli("bench-stitch --extents 2 --overlap 0.5 --out " + ws.path("bench.tsv"));
    CHECK(bench.code == 0);
}

TEST_CASE("usage and I/O errors use distinct exit codes") {
    Workspace ws;
    const auto usage = run_cli("generate --bogus");
    CHECK(usage.code == 1);
    const auto bad_value = run_cli("generate --config " + ws.path("desk.cfg") + " --r 99 --out " + ws.path("p"));
    CHECK(bad_value.code == 1);
    CHECK(bad_value.output.find("\"status\":\"error\"") != std::string::npos);
    const auto missing = run_cli("generate --config " + ws.path("absent.cfg"));
    CHECK(missing.code == 3);
    const auto verify_missing = run_cli("verify " + ws.path("nothing_here"));
    CHECK(verify_missing.code == 3);
}
