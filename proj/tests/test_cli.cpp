// Drives the installed `dagan` binary end to end. The test runner passes the
// binary location through DAGAN_BIN (set by CMake); each case gets a scratch
// directory and asserts on exit codes plus captured stdout/stderr.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dagan_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunResult {
    int exit_code;
    std::string out, err;
};

RunResult run(const std::string& args) {
    const char* bin = std::getenv("DAGAN_BIN");
    REQUIRE(bin != nullptr);
    TempDir cap;
    const auto out_p = cap.path / "out.txt";
    const auto err_p = cap.path / "err.txt";
    const std::string cmd =
        std::string(bin) + " " + args + " >" + out_p.string() + " 2>" + err_p.string();
    int rc = std::system(cmd.c_str());
    int code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return {code, slurp(out_p), slurp(err_p)};
}

// tiny shapes8 setup so every command finishes in seconds
fs::path write_config(const fs::path& dir) {
    const auto p = dir / "cfg.json";
    std::ofstream out(p);
    out << R"({
      "task": {"name": "shapes8", "resolution": 16, "n_train": 32, "n_eval": 16},
      "train": {
        "steps": 2, "batch_size": 8, "seed": 3,
        "net": {"n_regions": 1, "enc1": 4, "enc2": 4, "gen_entry": 4, "gen_up1": 4,
                 "gen_up2": 4, "d1": 4, "d2": 4, "d3": 4, "oc1": 4, "oc2": 4,
                 "floc_hidden": 4}
      }
    })";
    return p;
}

}  // namespace

TEST_CASE("cli: gradcheck exits 0 on a clean build") {
    auto r = run("gradcheck");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("all passed") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("cli: make-data writes IDX files and echoes the resolved config") {
    TempDir td;
    auto cfg = write_config(td.path);
    auto out_dir = td.path / "data";
    auto r = run("make-data --config " + cfg.string() + " --out " + out_dir.string());
    CHECK(r.exit_code == 0);
    CHECK(r.err.find("effective-config") != std::string::npos);
    for (const char* stem : {"source_train", "target_train", "source_eval", "target_eval"}) {
        CHECK(fs::exists(out_dir / (std::string(stem) + ".images.idx")));
        CHECK(fs::exists(out_dir / (std::string(stem) + ".labels.idx")));
    }
    auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("written") == out_dir.string());
}

TEST_CASE("cli: train --steps 0 writes an init-only checkpoint") {
    TempDir td;
    auto cfg = write_config(td.path);
    auto out_dir = td.path / "run";
    auto r = run("train --config " + cfg.string() + " --steps 0 --out " + out_dir.string());
    CHECK(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("steps") == 0);
    const auto ckpt = out_dir / "ckpt_final.bin";
    REQUIRE(fs::exists(ckpt));
    auto bytes = slurp(ckpt);
    REQUIRE(bytes.size() >= 4);
    CHECK(bytes.substr(0, 4) == "DAGN");
    // no steps -> no metric lines
    CHECK(slurp(out_dir / "metrics.jsonl").empty());
}

TEST_CASE("cli: train/translate/eval/scatter pipeline on a tiny run") {
    TempDir td;
    auto cfg = write_config(td.path);
    auto run_dir = td.path / "run";

    auto r = run("train --config " + cfg.string() + " --out " + run_dir.string());
    REQUIRE(r.exit_code == 0);
    auto tj = nlohmann::json::parse(r.out);
    CHECK(tj.at("steps") == 2);
    CHECK(tj.at("final").at("total").is_number());

    const auto ckpt = (run_dir / "ckpt_final.bin").string();
    auto smp_dir = td.path / "samples";
    r = run("translate --config " + cfg.string() + " --checkpoint " + ckpt + " --out " +
            smp_dir.string());
    REQUIRE(r.exit_code == 0);
    CHECK(nlohmann::json::parse(r.out).at("translated") == 16);
    CHECK(fs::exists(smp_dir / "translated.images.idx"));

    r = run("eval --config " + cfg.string() + " --samples " + smp_dir.string());
    REQUIRE(r.exit_code == 0);
    auto ej = nlohmann::json::parse(r.out);
    CHECK(ej.at("score").at("inception_score").is_number());
    CHECK(ej.at("modes").contains("missing_count"));
    CHECK(ej.at("accuracy").at("top1").is_number());

    const auto csv = td.path / "fig.csv";
    r = run("scatter --config " + cfg.string() + " --checkpoint " + ckpt + " --csv " +
            csv.string());
    REQUIRE(r.exit_code == 0);
    auto lines = slurp(csv);
    CHECK(lines.rfind("x,y,mode,source", 0) == 0);
    // header + 16 eval-target rows + 16 translated rows
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 33);
}

TEST_CASE("cli: error paths exit nonzero with a message on stderr") {
    TempDir td;
    auto cfg = write_config(td.path);

    auto r = run("eval --config " + cfg.string() + " --samples " + (td.path / "void").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("empty batch") != std::string::npos);

    r = run("eval --config " + cfg.string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("--checkpoint or --samples") != std::string::npos);

    r = run("train --config " + cfg.string() + " --bogus-flag 1");
    CHECK(r.exit_code != 0);

    r = run("train --config " + (td.path / "missing.json").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("cannot read") != std::string::npos);

    r = run("frobnicate");
    CHECK(r.exit_code != 0);
}
